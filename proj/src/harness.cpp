#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "qdscan/io.hpp"
#include "record_json.hpp"

namespace qdscan {

using detail::EventSink;

std::string map_fingerprint(const CurrentMap& map) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  const VoltageWindow& w = map.window;
  for (double v : {w.axis1.min, w.axis1.max, w.axis2.min, w.axis2.max}) mix(&v, sizeof v);
  const int dims[2] = {map.values.rows(), map.values.cols()};
  mix(dims, sizeof dims);
  for (double v : map.values.flat()) mix(&v, sizeof v);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GroundTruth simulate_ground_truth(const ExperimentConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.device_seed);
  GroundTruth truth;
  DeviceParams params = sample_device_params(rng, config.device);
  params.rng_seed = config.device_seed;
  truth.map = simulate_current_map(params, config.window);
  truth.segmentation = simulate_segmentation_map(params, config.window);
  if (config.measurement_snr > 0.0) add_measurement_noise(truth.map, config.measurement_snr, rng);
  truth.params = std::move(params);
  truth.fingerprint = map_fingerprint(truth.map);
  return truth;
}

GroundTruth replay_ground_truth(const std::filesystem::path& path) {
  GroundTruth truth;
  truth.map = load_recorded_map(path);
  truth.fingerprint = map_fingerprint(truth.map);
  return truth;
}

std::vector<Pixel> RunRecord::sequence() const {
  std::vector<Pixel> seq;
  for (const auto& s : steps) seq.insert(seq.end(), s.locations.begin(), s.locations.end());
  return seq;
}

namespace {

/// Measurement state shared by every mode.
class Acquisition {
 public:
  Acquisition(const CurrentMap& scaled, const TimeModel& model, RunRecord& record, EventSink& sink)
      : y_(scaled),
        model_(model),
        record_(record),
        sink_(sink),
        obs_(scaled.values.rows(), scaled.values.cols()),
        gradient_(gradient_norm_map(scaled)) {
    for (double v : gradient_.values.flat()) total_ += v;
    if (!(total_ > 0.0)) throw DomainError("ground truth has no current gradient; r is undefined");
  }

  void measure(std::span<const Pixel> locations, ReconstructionEnsemble* ensemble) {
    for (Pixel p : locations) {
      elapsed_ += model_.settle_time + model_.per_pixel_read + ramp_time(model_, y_.window, pos_, p);
      pos_ = p;
      const double value = y_.values[p];
      if (ensemble) ensemble->weights = update_weights_incremental(*ensemble, obs_, p, value);
      obs_.add(p, value);
      mass_ += gradient_.values[p];
    }
    StepEvent ev{obs_.size(), {locations.begin(), locations.end()}, elapsed_, r()};
    sink_.write(detail::step_json(ev));
    record_.steps.push_back(std::move(ev));
  }

  double r() const {
    if (obs_.size() == y_.values.size()) return 0.0;
    return std::clamp(1.0 - mass_ / total_, 0.0, 1.0);
  }
  void add_compute_time(double seconds) { elapsed_ += seconds; }

  const ObservationSet& obs() const { return obs_; }
  const CurrentMap& map() const { return y_; }
  Pixel position() const { return pos_; }
  double elapsed() const { return elapsed_; }

 private:
  const CurrentMap& y_;
  TimeModel model_;
  RunRecord& record_;
  EventSink& sink_;
  ObservationSet obs_;
  GradientMap gradient_;
  double total_ = 0.0;
  double mass_ = 0.0;
  double elapsed_ = 0.0;
  Pixel pos_{};
};

double entropy(std::span<const double> w) {
  double h = 0.0;
  for (double p : w)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

void write_mh_diagnostics(const std::filesystem::path& dir, int b, std::size_t n,
                          const MhDiagnostics& d, bool first) {
  std::ofstream summary(dir / "mh_diagnostics.csv", first ? std::ios::trunc : std::ios::app);
  std::ofstream trace(dir / "mh_trace.csv", first ? std::ios::trunc : std::ios::app);
  if (!summary || !trace) throw RuntimeError("cannot write MH diagnostics in " + dir.string());
  if (first) {
    summary << "batch_index,n,mean_acceptance,min_acceptance,max_acceptance,clamped_decodes,final_mean_loglik\n";
    trace << "batch_index,iteration,mean_loglik\n";
  }
  const auto& a = d.acceptance_rate;
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  summary << b << ',' << n << ',' << mean << ',' << *std::min_element(a.begin(), a.end()) << ','
          << *std::max_element(a.begin(), a.end()) << ',' << d.clamped_decodes << ','
          << (d.mean_loglik.empty() ? 0.0 : d.mean_loglik.back()) << '\n';
  for (std::size_t i = 0; i < d.mean_loglik.size(); ++i)
    trace << b << ',' << i << ',' << d.mean_loglik[i] << '\n';
}

void write_snapshot(const std::filesystem::path& dir, const ReconstructionEnsemble& ens) {
  std::filesystem::create_directories(dir);
  for (std::size_t m = 0; m < ens.size(); ++m) {
    char name[32];
    std::snprintf(name, sizeof name, "member_%03zu.csv", m);
    save_map_csv(dir / name, ens.members[m]);
  }
  std::ofstream w(dir / "weights.csv");
  w << "member,weight\n";
  w.precision(17);
  for (std::size_t m = 0; m < ens.size(); ++m) w << m << ',' << ens.weights[m] << '\n';
}

TimeModel time_model_for(const ExperimentConfig& config, const VoltageWindow& window) {
  ExperimentConfig c = config;
  c.window = window;
  return c.effective_time_model();
}

CurrentMap scaled_truth(const GroundTruth& truth, const std::vector<Pixel>& initial) {
  CurrentMap y = truth.map;
  rescale_to_grid(y, initial);
  return y;
}

}  // namespace

RunRecord run_active(const ExperimentConfig& config, const GroundTruth& truth,
                     const RunOptions& options) {
  config.validate();
  if (config.mode == Mode::gridscan) return run_gridscan(config, truth, options);
  const VoltageWindow& window = truth.map.window;
  window.validate();
  const int rows = window.rows, cols = window.cols;
  const std::size_t total = window.pixel_count();
  const TimeModel model = time_model_for(config, window);
  const TravelMetric metric = travel_metric(model, window);
  const auto initial = uniform_grid(rows, cols, config.initial_rows, config.initial_cols);
  const CurrentMap y = scaled_truth(truth, initial);

  RunRecord record;
  record.mode = config.mode;
  record.rows = rows;
  record.cols = cols;
  record.seed = config.seed;
  record.ground_truth = truth.fingerprint;

  EventSink sink = options.events_path ? EventSink(*options.events_path) : EventSink();
  if (options.artifact_dir) std::filesystem::create_directories(*options.artifact_dir);
  sink.write(detail::header_json(record));

  try {
    Acquisition acq(y, model, record, sink);
    acq.measure(initial, nullptr);

    const PhysicsBackend backend(window, config.prior);
    const ConditioningInput cond = ConditioningInput::from_map(y, initial);
    ReconstructionEnsemble ens =
        prior_ensemble(backend, cond, config.members, config.lambda, mix_seed(config.seed, 0x9a1));

    const bool stopping = config.stopping.policy != StopPolicy::off;
    const bool want_estimates = stopping || config.estimates;
    std::vector<NoiseProfile> profiles;
    if (want_estimates) profiles = standard_noise_profiles(rows, cols, mix_seed(config.seed, 0x401e));

    const double budget = config.stopping.policy == StopPolicy::budget && config.stopping.total_budget > 0.0
                              ? std::min(config.stopping.total_budget, static_cast<double>(total))
                              : static_cast<double>(total);
    const std::optional<double> remaining_maps =
        config.stopping.policy == StopPolicy::budget ? config.stopping.remaining_maps : std::nullopt;

    std::size_t next_resample = initial.size();
    int block = -1;
    bool stopped = false, first_mh = true;
    const bool pixelwise = config.mode == Mode::pixelwise;

    while (acq.obs().size() < total) {
      const std::size_t n = acq.obs().size();
      const auto t0 = std::chrono::steady_clock::now();
      DecisionEvent d;
      d.n = n;

      const bool at_resample = n >= next_resample;
      if (at_resample) {
        ++block;
        MhOptions mh{config.mh_iterations, config.proposal_scale, config.threads};
        MhDiagnostics diag;
        ens = mh_resample(backend, ens, acq.obs(), cond, mh, mix_seed(config.seed, 0x3c00 + block), &diag);
        d.resampled = true;
        d.mean_acceptance = std::accumulate(diag.acceptance_rate.begin(), diag.acceptance_rate.end(), 0.0) /
                            static_cast<double>(diag.acceptance_rate.size());
        if (options.artifact_dir) {
          write_mh_diagnostics(*options.artifact_dir, block, n, diag, first_mh);
          if (options.snapshot_ensembles)
            write_snapshot(*options.artifact_dir / ("ensemble_b" + std::to_string(block)), ens);
        }
        first_mh = false;
        while (next_resample <= n) next_resample *= 2;
      }
      d.batch_index = block;

      const std::size_t limit = static_cast<std::size_t>(std::floor(budget));
      if (n >= limit) break;
      // Pixels until the next decision point; a pixelwise run still checks
      // stopping over that span but acquires one pixel at a time.
      std::size_t span = std::min(next_resample - n, total - n);
      span = std::min(span, limit - n);
      const std::size_t batch = pixelwise ? 1 : span;
      d.batch_size = batch;

      std::vector<Pixel> planned;
      std::optional<AcquisitionMap> map;
      if (span == total - n && !pixelwise) {
        for (std::size_t i = 0; i < total; ++i)
          if (!acq.obs().mask().flat()[i]) planned.push_back(y.values.pixel(i));
        d.best = planned.front();
        planned = order_tour(acq.position(), std::move(planned), metric);
      } else {
        map = config.mode == Mode::segmentation_batch
                  ? segmentation_disagreement_map(backend, ens, acq.obs(), config.flip_probability,
                                                  config.threads)
                  : information_gain_map(ens, acq.obs(), config.threads);
        d.best = select_pixel(*map);
        double sum = 0.0, peak = -std::numeric_limits<double>::infinity();
        std::size_t count = 0;
        for (std::size_t i = 0; i < map->values.size(); ++i) {
          if (map->mask.flat()[i]) continue;
          sum += map->values.flat()[i];
          peak = std::max(peak, map->values.flat()[i]);
          ++count;
        }
        d.ig_max = peak;
        d.ig_mean = count ? sum / static_cast<double>(count) : 0.0;
        if (pixelwise) {
          planned = {d.best};
        } else {
          planned = select_batch(*map, batch, acq.position(), metric, block).locations;
        }
        if (options.artifact_dir && (!pixelwise || at_resample)) {
          const std::string stem = "acquisition_b" + std::to_string(block);
          save_grid_csv(*options.artifact_dir / (stem + ".csv"), map->values, window);
          Grid<double> shown = map->values;
          for (double& v : shown.flat())
            if (!std::isfinite(v)) v = 0.0;
          write_grayscale_png(*options.artifact_dir / (stem + ".png"), shown);
        }
      }

      if (want_estimates && (!pixelwise || at_resample)) {
        std::vector<Pixel> next = planned;
        if (pixelwise && span > 1) next = top_pixels(*map, span);
        const MemberEstimates est = augmented_member_estimates(
            ens, profiles, config.augmentation_snr, acq.obs().mask(), next, config.threads);
        d.estimate = summarize_estimates(est.r_now, est.weights);
        if (stopping) {
          StoppingState state{static_cast<double>(n), budget, remaining_maps,
                              static_cast<double>(next.size()), static_cast<double>(total)};
          d.stop = stopping_decide(state, est.r_now, est.r_next, est.weights,
                                   config.stopping.statistic);
        }
      }

      if (model.include_compute)
        acq.add_compute_time(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      d.weight_entropy = entropy(ens.weights);
      d.r = acq.r();
      d.elapsed = acq.elapsed();
      sink.write(detail::decision_json(d));
      const bool stop_now = d.stop && d.stop->stop && !stopped;
      record.decisions.push_back(d);
      if (stop_now) {
        stopped = true;
        record.stop_n = n;
        record.stop_time = acq.elapsed();
        sink.write(detail::stop_json(n, acq.elapsed()));
        if (config.stopping.halt) break;
      }
      acq.measure(planned, &ens);
    }
    record.total_time = acq.elapsed();
    record.complete = acq.obs().size() == total;
  } catch (const std::exception& e) {
    sink.write({{"event", "error"}, {"message", e.what()}});
    throw;
  }
  sink.write(detail::end_json(record));
  return record;
}

RunRecord run_gridscan(const ExperimentConfig& config, const GroundTruth& truth,
                       const RunOptions& options) {
  config.validate();
  const VoltageWindow& window = truth.map.window;
  window.validate();
  const auto stages =
      gridscan_stages(window.rows, window.cols, config.initial_rows, config.initial_cols);
  const TimeModel model = time_model_for(config, window);
  const CurrentMap y = scaled_truth(truth, stages.front());

  RunRecord record;
  record.mode = Mode::gridscan;
  record.rows = window.rows;
  record.cols = window.cols;
  record.seed = config.seed;
  record.ground_truth = truth.fingerprint;
  EventSink sink = options.events_path ? EventSink(*options.events_path) : EventSink();
  sink.write(detail::header_json(record));
  try {
    Acquisition acq(y, model, record, sink);
    for (const auto& stage : stages) acq.measure(stage, nullptr);
    record.total_time = acq.elapsed();
    record.complete = true;
  } catch (const std::exception& e) {
    sink.write({{"event", "error"}, {"message", e.what()}});
    throw;
  }
  sink.write(detail::end_json(record));
  return record;
}

RunRecord run_experiment(const ExperimentConfig& config, const GroundTruth& truth,
                         const RunOptions& options) {
  return config.mode == Mode::gridscan ? run_gridscan(config, truth, options)
                                       : run_active(config, truth, options);
}

}  // namespace qdscan
