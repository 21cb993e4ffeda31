#pragma once

// Experiment orchestration: ground truth, the active acquisition loop, grid
// scans, the measurement-time model and run comparison.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qdscan/acquisition.hpp"
#include "qdscan/common.hpp"
#include "qdscan/device.hpp"
#include "qdscan/metrics.hpp"
#include "qdscan/posterior.hpp"

namespace qdscan {

// ---------------------------------------------------------------------------
// Time model
// ---------------------------------------------------------------------------

struct TimeModel {
  double settle_time = 0.01;     // s per measurement
  double ramp_rate = 100.0;      // V/s on each axis; 0 disables ramp cost
  double per_pixel_read = 0.0;   // s per measurement
  bool include_compute = false;  // add wall-clock decision time

  void validate() const;
};

/// Time to ramp from a to b; both axes move at once.
double ramp_time(const TimeModel& model, const VoltageWindow& window, Pixel a, Pixel b);

/// Sum over the sequence of settle + read + ramp from the previous position.
double simulated_time(std::span<const Pixel> sequence, const VoltageWindow& window,
                      const TimeModel& model, Pixel start = {});

/// Travel metric consistent with ramp_time, for batch tours.
TravelMetric travel_metric(const TimeModel& model, const VoltageWindow& window);

/// Copy of `model` whose per_pixel_read makes the full alternating grid scan
/// of `window` take `gridscan_seconds`. Throws ConfigError if settle and ramp
/// alone already exceed the target.
TimeModel calibrate_time_model(TimeModel model, const VoltageWindow& window,
                               double gridscan_seconds = 554.0, int initial_rows = 8,
                               int initial_cols = 8);

// ---------------------------------------------------------------------------
// Grid scan
// ---------------------------------------------------------------------------

/// Stages of the alternating refinement (rows doubled first). Each stage holds
/// only its new pixels, row-major. Throws ConfigError unless every dimension
/// is a power of two with initial <= full.
std::vector<std::vector<Pixel>> gridscan_stages(int rows, int cols, int initial_rows = 8,
                                                int initial_cols = 8);
std::vector<Pixel> gridscan_sequence(int rows, int cols, int initial_rows = 8,
                                     int initial_cols = 8);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Mode { batch, pixelwise, gridscan, segmentation_batch };
enum class StopPolicy { off, infinite, budget };

Mode parse_mode(std::string_view name);
std::string_view mode_name(Mode mode);
StopPolicy parse_stop_policy(std::string_view name);
std::string_view stop_policy_name(StopPolicy policy);

struct StoppingConfig {
  StopPolicy policy = StopPolicy::infinite;
  /// T in pixels; 0 means N.
  double total_budget = 0.0;
  /// K for the budget policy; nullopt means unlimited.
  std::optional<double> remaining_maps;
  /// When false the run logs the stop point and keeps measuring.
  bool halt = true;
  /// Minimum over members is the strict worst case; it fires as soon as
  /// any member predicts a flat batch, which a broad posterior always does.
  BetaStatistic statistic = BetaStatistic::weighted_mean;
};

struct ExperimentConfig {
  Mode mode = Mode::batch;
  VoltageWindow window{{0.0, 5.0}, {-0.4, 0.4}, 128, 128};
  int initial_rows = 8;
  int initial_cols = 8;

  std::size_t members = 100;
  double lambda = 1.0;
  int mh_iterations = 400;
  double proposal_scale = 0.5;

  StoppingConfig stopping;
  std::vector<double> augmentation_snr{400.0, 1600.0, 6400.0};
  /// Compute credible intervals at decision points even without stopping.
  bool estimates = true;
  double flip_probability = 0.05;

  /// Ranges for simulated ground-truth devices.
  DeviceSampling device;
  /// Ranges of the reconstruction prior.
  DeviceSampling prior;
  /// Signal-to-noise power ratio of the simulated measurement; 0 = noiseless.
  double measurement_snr = 6400.0;

  std::uint64_t seed = 1;
  std::uint64_t device_seed = 1;
  TimeModel time;
  /// Grid-scan duration the time model is calibrated to when per_pixel_read
  /// is left at 0.
  double gridscan_seconds = 554.0;
  unsigned threads = 0;

  void validate() const;
  std::size_t pixel_count() const { return window.pixel_count(); }
  /// Time model after calibration.
  TimeModel effective_time_model() const;
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Shared settings plus the device seeds of a fixed test suite.
struct SuiteConfig {
  ExperimentConfig base;
  std::vector<std::uint64_t> device_seeds;
};
SuiteConfig load_suite(const std::filesystem::path& path);
SuiteConfig suite_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

struct GroundTruth {
  CurrentMap map;
  std::optional<DeviceParams> params;
  std::optional<SegmentationMap> segmentation;
  std::string fingerprint;
};

/// FNV-1a over the window and value bits.
std::string map_fingerprint(const CurrentMap& map);

GroundTruth simulate_ground_truth(const ExperimentConfig& config);
GroundTruth replay_ground_truth(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

struct StepEvent {
  std::size_t n = 0;  // measured count after the step
  std::vector<Pixel> locations;
  double elapsed = 0.0;
  double r = 0.0;
};

struct DecisionEvent {
  std::size_t n = 0;
  int batch_index = 0;
  std::size_t batch_size = 0;
  /// Highest-ranked unmeasured pixel of the acquisition map.
  Pixel best;
  bool resampled = false;
  double mean_acceptance = 0.0;
  double ig_max = 0.0;
  double ig_mean = 0.0;
  double weight_entropy = 0.0;
  double r = 0.0;
  std::optional<RInterval> estimate;
  std::optional<StopDecision> stop;
  double elapsed = 0.0;
};

struct RunRecord {
  Mode mode = Mode::batch;
  int rows = 0;
  int cols = 0;
  std::uint64_t seed = 0;
  std::string ground_truth;
  std::vector<StepEvent> steps;
  std::vector<DecisionEvent> decisions;
  std::optional<std::size_t> stop_n;
  std::optional<double> stop_time;
  double total_time = 0.0;
  bool complete = false;

  std::vector<Pixel> sequence() const;
  std::size_t measured() const { return steps.empty() ? 0 : steps.back().n; }
  /// Time at the stop point, or the total when the run never stopped.
  double time_to_stop() const { return stop_time.value_or(total_time); }
};

void write_run_record(const std::filesystem::path& path, const RunRecord& record);
RunRecord load_run_record(const std::filesystem::path& path);

struct RunOptions {
  /// Events are appended here as they happen, so a failed run leaves the
  /// steps completed so far.
  std::optional<std::filesystem::path> events_path;
  /// Acquisition maps, MH diagnostics and ensemble snapshots go here.
  std::optional<std::filesystem::path> artifact_dir;
  bool snapshot_ensembles = false;
};

RunRecord run_active(const ExperimentConfig& config, const GroundTruth& truth,
                     const RunOptions& options = {});
RunRecord run_gridscan(const ExperimentConfig& config, const GroundTruth& truth,
                       const RunOptions& options = {});
/// Dispatches on config.mode.
RunRecord run_experiment(const ExperimentConfig& config, const GroundTruth& truth,
                         const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// r(n) for n = 0..measured(), from the record's sequence.
std::vector<double> actual_curve(const RunRecord& record, const GroundTruth& truth);

/// e(n) with Sobel edges of the ground-truth segmentation in place of v(x).
/// Throws UnsupportedError without a segmentation.
ErrorCurve edge_error_curve(const RunRecord& record, const GroundTruth& truth);

struct RunSummary {
  std::string label;
  Mode mode = Mode::batch;
  std::size_t measured = 0;
  std::optional<std::size_t> stop_n;
  double time_to_stop = 0.0;
  /// Reference time-to-stop divided by this run's.
  double speedup = 1.0;
  /// Largest r(n) - optimal_r(n) over the run.
  double max_optimality_gap = 0.0;
  double mean_optimality_gap = 0.0;
};

struct CompareReport {
  std::vector<RunSummary> runs;
  /// Curve rows: n, then r(n) per run (NaN past a run's end), then optimal.
  std::vector<std::size_t> n;
  std::vector<std::vector<double>> curves;
  std::vector<double> optimal;
};

/// The first record is the reference for speedups. Throws DomainError when
/// records refer to different ground truths or fewer than two are given.
CompareReport compare_runs(const std::vector<RunRecord>& records, const GroundTruth& truth,
                           const std::vector<std::string>& labels = {});
void write_compare_report(const std::filesystem::path& dir, const CompareReport& report);

/// curves.csv (n, actual, est_mean, est_lo90, est_hi90, optimal, gridscan),
/// curves.png and ground-truth / measured-mask images.
void write_run_artifacts(const std::filesystem::path& dir, const RunRecord& record,
                         const GroundTruth& truth, const ExperimentConfig& config);

}  // namespace qdscan
