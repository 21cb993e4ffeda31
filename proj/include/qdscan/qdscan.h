#ifndef QDSCAN_H
#define QDSCAN_H

/* C interface to the qdscan library. Every handle is opaque and owned by the
 * caller, who releases it with the matching *_free function. Functions return
 * a qds_status; on failure qds_last_error() describes the cause. The error
 * text is thread-local and valid until the next call on the same thread. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define QDS_API __declspec(dllexport)
#else
#define QDS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qds_status {
  QDS_OK = 0,
  QDS_ERR_CONFIG = 1,
  QDS_ERR_RUNTIME = 2,
  QDS_ERR_PARSE = 3,
  QDS_ERR_DOMAIN = 4,
  QDS_ERR_DEGENERATE = 5,
  QDS_ERR_UNSUPPORTED = 6,
  QDS_ERR_ARGUMENT = 7,
  QDS_ERR_INTERNAL = 8
} qds_status;

typedef struct qds_config qds_config;
typedef struct qds_truth qds_truth;
typedef struct qds_run qds_run;
typedef struct qds_report qds_report;

QDS_API const char* qds_version(void);
QDS_API const char* qds_last_error(void);
QDS_API const char* qds_status_name(qds_status status);

/* Strings returned through char** out-parameters are released here. */
QDS_API void qds_string_free(char* s);

/* ---- configuration ---- */

QDS_API qds_status qds_config_default(qds_config** out);
QDS_API qds_status qds_config_load(const char* path, qds_config** out);
QDS_API qds_status qds_config_parse(const char* json, qds_config** out);
QDS_API qds_status qds_config_to_json(const qds_config* config, char** out);
QDS_API void qds_config_free(qds_config* config);

/* Sets both the sampling seed and the device seed. */
QDS_API qds_status qds_config_set_seed(qds_config* config, uint64_t seed);
QDS_API qds_status qds_config_set_device_seed(qds_config* config, uint64_t seed);
/* "batch", "pixelwise", "gridscan" or "segmentation_batch". */
QDS_API qds_status qds_config_set_mode(qds_config* config, const char* mode);
/* policy is "off", "infinite" or "budget". budget <= 0 means the full map;
 * remaining < 0 means an unlimited number of further maps. */
QDS_API qds_status qds_config_set_stopping(qds_config* config, const char* policy, double budget,
                                           double remaining);
/* Keep measuring after the stop point fires (the stop is still logged). */
QDS_API qds_status qds_config_set_halt(qds_config* config, int halt);
QDS_API qds_status qds_config_set_threads(qds_config* config, unsigned threads);

/* ---- ground truth ---- */

QDS_API qds_status qds_truth_simulate(const qds_config* config, qds_truth** out);
/* Loads a recorded map CSV. */
QDS_API qds_status qds_truth_load(const char* path, qds_truth** out);
/* Writes ground_truth.csv/.png, plus segmentation.png and device.json when
 * the truth was simulated. */
QDS_API qds_status qds_truth_save(const qds_truth* truth, const char* dir);
QDS_API const char* qds_truth_fingerprint(const qds_truth* truth);
QDS_API qds_status qds_truth_shape(const qds_truth* truth, int* rows, int* cols);
QDS_API void qds_truth_free(qds_truth* truth);

/* ---- runs ---- */

/* Runs the configured mode against truth. With out_dir set, events.jsonl is
 * streamed there and curve / map artifacts are written at the end. */
QDS_API qds_status qds_run_execute(const qds_config* config, const qds_truth* truth,
                                   const char* out_dir, qds_run** out);
QDS_API qds_status qds_run_load(const char* events_path, qds_run** out);
QDS_API void qds_run_free(qds_run* run);

typedef struct qds_run_info {
  const char* mode;     /* owned by the run */
  size_t measured;
  int stopped;          /* 1 when a stop decision fired */
  size_t stop_n;
  double stop_time;     /* simulated seconds at the stop point */
  double total_time;
  double time_to_stop;  /* stop_time, or total_time without a stop */
  int complete;
  size_t decisions;
} qds_run_info;

QDS_API qds_status qds_run_get_info(const qds_run* run, qds_run_info* info);

/* r(n) for n = 0..measured. Writes at most capacity values; *length gets the
 * full length so a NULL buffer can be used to query it. */
QDS_API qds_status qds_run_curve(const qds_run* run, const qds_truth* truth, double* values,
                                 size_t capacity, size_t* length);

/* ---- comparison ---- */

/* runs[0] is the reference for speedups. labels may be NULL. */
QDS_API qds_status qds_compare(const qds_run* const* runs, const char* const* labels, size_t count,
                               const qds_truth* truth, qds_report** out);
QDS_API qds_status qds_report_write(const qds_report* report, const char* dir);
QDS_API size_t qds_report_size(const qds_report* report);

typedef struct qds_run_summary {
  const char* label;  /* owned by the report */
  const char* mode;
  size_t measured;
  int stopped;
  size_t stop_n;
  double time_to_stop;
  double speedup;
  double max_optimality_gap;
  double mean_optimality_gap;
} qds_run_summary;

QDS_API qds_status qds_report_summary(const qds_report* report, size_t index,
                                      qds_run_summary* summary);
QDS_API void qds_report_free(qds_report* report);

#ifdef __cplusplus
}
#endif

#endif
