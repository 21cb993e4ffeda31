#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include "qdscan/harness.hpp"
#include "qdscan/io.hpp"
#include "qdscan/qdscan.h"

struct qds_config {
  qdscan::ExperimentConfig value;
};
struct qds_truth {
  qdscan::GroundTruth value;
};
struct qds_run {
  qdscan::RunRecord value;
  std::string mode;
};
struct qds_report {
  qdscan::CompareReport value;
  std::vector<std::string> modes;
};

namespace {

thread_local std::string last_error;

qds_status status_of(qdscan::ErrorKind kind) {
  switch (kind) {
    case qdscan::ErrorKind::config: return QDS_ERR_CONFIG;
    case qdscan::ErrorKind::parse: return QDS_ERR_PARSE;
    case qdscan::ErrorKind::domain: return QDS_ERR_DOMAIN;
    case qdscan::ErrorKind::runtime: return QDS_ERR_RUNTIME;
    case qdscan::ErrorKind::degenerate: return QDS_ERR_DEGENERATE;
    case qdscan::ErrorKind::unsupported: return QDS_ERR_UNSUPPORTED;
  }
  return QDS_ERR_INTERNAL;
}

qds_status fail(qds_status s, std::string what) {
  last_error = std::move(what);
  return s;
}

// Runs f and maps exceptions onto status codes.
template <class F>
qds_status guard(F&& f) {
  try {
    last_error.clear();
    f();
    return QDS_OK;
  } catch (const qdscan::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(QDS_ERR_RUNTIME, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(QDS_ERR_RUNTIME, e.what());
  } catch (const std::exception& e) {
    return fail(QDS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(QDS_ERR_INTERNAL, "unknown error");
  }
}

#define QDS_REQUIRE(cond, msg) \
  if (!(cond)) return fail(QDS_ERR_ARGUMENT, msg)

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* qds_version(void) { return "0.1.0"; }

const char* qds_last_error(void) { return last_error.c_str(); }

const char* qds_status_name(qds_status status) {
  switch (status) {
    case QDS_OK: return "ok";
    case QDS_ERR_CONFIG: return "config error";
    case QDS_ERR_RUNTIME: return "runtime error";
    case QDS_ERR_PARSE: return "parse error";
    case QDS_ERR_DOMAIN: return "domain error";
    case QDS_ERR_DEGENERATE: return "degenerate ensemble";
    case QDS_ERR_UNSUPPORTED: return "unsupported";
    case QDS_ERR_ARGUMENT: return "invalid argument";
    case QDS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void qds_string_free(char* s) { delete[] s; }

qds_status qds_config_default(qds_config** out) {
  QDS_REQUIRE(out, "out is null");
  return guard([&] { *out = new qds_config{}; });
}

qds_status qds_config_load(const char* path, qds_config** out) {
  QDS_REQUIRE(path && out, "null argument");
  return guard([&] { *out = new qds_config{qdscan::load_config(path)}; });
}

qds_status qds_config_parse(const char* json, qds_config** out) {
  QDS_REQUIRE(json && out, "null argument");
  return guard([&] { *out = new qds_config{qdscan::config_from_json(json)}; });
}

qds_status qds_config_to_json(const qds_config* config, char** out) {
  QDS_REQUIRE(config && out, "null argument");
  return guard([&] { *out = copy_string(qdscan::config_to_json(config->value)); });
}

void qds_config_free(qds_config* config) { delete config; }

qds_status qds_config_set_seed(qds_config* config, uint64_t seed) {
  QDS_REQUIRE(config, "config is null");
  config->value.seed = seed;
  config->value.device_seed = seed;
  return QDS_OK;
}

qds_status qds_config_set_device_seed(qds_config* config, uint64_t seed) {
  QDS_REQUIRE(config, "config is null");
  config->value.device_seed = seed;
  return QDS_OK;
}

qds_status qds_config_set_mode(qds_config* config, const char* mode) {
  QDS_REQUIRE(config && mode, "null argument");
  return guard([&] { config->value.mode = qdscan::parse_mode(mode); });
}

qds_status qds_config_set_stopping(qds_config* config, const char* policy, double budget,
                                   double remaining) {
  QDS_REQUIRE(config && policy, "null argument");
  return guard([&] {
    auto s = config->value.stopping;
    s.policy = qdscan::parse_stop_policy(policy);
    s.total_budget = budget > 0.0 ? budget : 0.0;
    if (remaining >= 0.0)
      s.remaining_maps = remaining;
    else
      s.remaining_maps.reset();
    auto c = config->value;
    c.stopping = s;
    c.validate();
    config->value = c;
  });
}

qds_status qds_config_set_halt(qds_config* config, int halt) {
  QDS_REQUIRE(config, "config is null");
  config->value.stopping.halt = halt != 0;
  return QDS_OK;
}

qds_status qds_config_set_threads(qds_config* config, unsigned threads) {
  QDS_REQUIRE(config, "config is null");
  config->value.threads = threads;
  return QDS_OK;
}

qds_status qds_truth_simulate(const qds_config* config, qds_truth** out) {
  QDS_REQUIRE(config && out, "null argument");
  return guard([&] { *out = new qds_truth{qdscan::simulate_ground_truth(config->value)}; });
}

qds_status qds_truth_load(const char* path, qds_truth** out) {
  QDS_REQUIRE(path && out, "null argument");
  return guard([&] { *out = new qds_truth{qdscan::replay_ground_truth(path)}; });
}

qds_status qds_truth_save(const qds_truth* truth, const char* dir) {
  QDS_REQUIRE(truth && dir, "null argument");
  return guard([&] {
    const std::filesystem::path d(dir);
    std::filesystem::create_directories(d);
    const auto& t = truth->value;
    qdscan::save_map_csv(d / "ground_truth.csv", t.map);
    qdscan::write_grayscale_png(d / "ground_truth.png", t.map.values);
    if (t.segmentation) {
      qdscan::Grid<double> seg(t.map.values.rows(), t.map.values.cols());
      for (std::size_t i = 0; i < seg.size(); ++i) seg.flat()[i] = t.segmentation->labels.flat()[i];
      qdscan::write_grayscale_png(d / "segmentation.png", seg);
    }
    if (t.params) {
      std::ofstream out(d / "device.json");
      if (!out) throw qdscan::RuntimeError("cannot write " + (d / "device.json").string());
      out << qdscan::device_params_to_json(*t.params) << '\n';
    }
  });
}

const char* qds_truth_fingerprint(const qds_truth* truth) {
  return truth ? truth->value.fingerprint.c_str() : "";
}

qds_status qds_truth_shape(const qds_truth* truth, int* rows, int* cols) {
  QDS_REQUIRE(truth && rows && cols, "null argument");
  *rows = truth->value.map.values.rows();
  *cols = truth->value.map.values.cols();
  return QDS_OK;
}

void qds_truth_free(qds_truth* truth) { delete truth; }

qds_status qds_run_execute(const qds_config* config, const qds_truth* truth, const char* out_dir,
                           qds_run** out) {
  QDS_REQUIRE(config && truth && out, "null argument");
  return guard([&] {
    qdscan::RunOptions opts;
    if (out_dir) {
      const std::filesystem::path d(out_dir);
      std::filesystem::create_directories(d);
      opts.events_path = d / "events.jsonl";
      opts.artifact_dir = d / "artifacts";
    }
    auto record = qdscan::run_experiment(config->value, truth->value, opts);
    if (out_dir) qdscan::write_run_artifacts(out_dir, record, truth->value, config->value);
    std::string mode(qdscan::mode_name(record.mode));
    *out = new qds_run{std::move(record), std::move(mode)};
  });
}

qds_status qds_run_load(const char* events_path, qds_run** out) {
  QDS_REQUIRE(events_path && out, "null argument");
  return guard([&] {
    auto record = qdscan::load_run_record(events_path);
    std::string mode(qdscan::mode_name(record.mode));
    *out = new qds_run{std::move(record), std::move(mode)};
  });
}

void qds_run_free(qds_run* run) { delete run; }

qds_status qds_run_get_info(const qds_run* run, qds_run_info* info) {
  QDS_REQUIRE(run && info, "null argument");
  const auto& r = run->value;
  info->mode = run->mode.c_str();
  info->measured = r.measured();
  info->stopped = r.stop_n.has_value();
  info->stop_n = r.stop_n.value_or(0);
  info->stop_time = r.stop_time.value_or(0.0);
  info->total_time = r.total_time;
  info->time_to_stop = r.time_to_stop();
  info->complete = r.complete;
  info->decisions = r.decisions.size();
  return QDS_OK;
}

qds_status qds_run_curve(const qds_run* run, const qds_truth* truth, double* values,
                         size_t capacity, size_t* length) {
  QDS_REQUIRE(run && truth && length, "null argument");
  QDS_REQUIRE(values || capacity == 0, "values is null");
  return guard([&] {
    if (run->value.ground_truth != truth->value.fingerprint)
      throw qdscan::DomainError("run was recorded on a different ground truth");
    const auto curve = qdscan::actual_curve(run->value, truth->value);
    *length = curve.size();
    std::copy_n(curve.begin(), std::min(capacity, curve.size()), values);
  });
}

qds_status qds_compare(const qds_run* const* runs, const char* const* labels, size_t count,
                       const qds_truth* truth, qds_report** out) {
  QDS_REQUIRE(runs && truth && out, "null argument");
  for (size_t i = 0; i < count; ++i) QDS_REQUIRE(runs[i], "run is null");
  return guard([&] {
    std::vector<qdscan::RunRecord> records;
    std::vector<std::string> names;
    for (size_t i = 0; i < count; ++i) {
      records.push_back(runs[i]->value);
      if (labels && labels[i]) names.emplace_back(labels[i]);
    }
    if (!names.empty() && names.size() != count) throw qdscan::DomainError("labels incomplete");
    auto* report = new qds_report{qdscan::compare_runs(records, truth->value, names), {}};
    for (const auto& s : report->value.runs) report->modes.emplace_back(qdscan::mode_name(s.mode));
    *out = report;
  });
}

qds_status qds_report_write(const qds_report* report, const char* dir) {
  QDS_REQUIRE(report && dir, "null argument");
  return guard([&] { qdscan::write_compare_report(dir, report->value); });
}

size_t qds_report_size(const qds_report* report) { return report ? report->value.runs.size() : 0; }

qds_status qds_report_summary(const qds_report* report, size_t index, qds_run_summary* summary) {
  QDS_REQUIRE(report && summary, "null argument");
  QDS_REQUIRE(index < report->value.runs.size(), "index out of range");
  const auto& s = report->value.runs[index];
  summary->label = s.label.c_str();
  summary->mode = report->modes[index].c_str();
  summary->measured = s.measured;
  summary->stopped = s.stop_n.has_value();
  summary->stop_n = s.stop_n.value_or(0);
  summary->time_to_stop = s.time_to_stop;
  summary->speedup = s.speedup;
  summary->max_optimality_gap = s.max_optimality_gap;
  summary->mean_optimality_gap = s.mean_optimality_gap;
  return QDS_OK;
}

void qds_report_free(qds_report* report) { delete report; }

}  // extern "C"
