#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qdscan/harness.hpp"

namespace qdscan {

using nlohmann::json;

Mode parse_mode(std::string_view name) {
  if (name == "batch") return Mode::batch;
  if (name == "pixelwise") return Mode::pixelwise;
  if (name == "gridscan") return Mode::gridscan;
  if (name == "segmentation_batch") return Mode::segmentation_batch;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::batch: return "batch";
    case Mode::pixelwise: return "pixelwise";
    case Mode::gridscan: return "gridscan";
    case Mode::segmentation_batch: return "segmentation_batch";
  }
  return "batch";
}

StopPolicy parse_stop_policy(std::string_view name) {
  if (name == "off") return StopPolicy::off;
  if (name == "infinite") return StopPolicy::infinite;
  if (name == "budget") return StopPolicy::budget;
  throw ConfigError("unknown stop policy '" + std::string(name) + "'");
}

std::string_view stop_policy_name(StopPolicy policy) {
  switch (policy) {
    case StopPolicy::off: return "off";
    case StopPolicy::infinite: return "infinite";
    case StopPolicy::budget: return "budget";
  }
  return "off";
}

void ExperimentConfig::validate() const {
  window.validate();
  if (initial_rows < 1 || initial_cols < 1 || initial_rows > window.rows ||
      initial_cols > window.cols)
    throw ConfigError("initial grid does not fit the resolution");
  if (members < 1) throw ConfigError("ensemble size must be positive");
  if (!(std::isfinite(lambda) && lambda >= 0.0)) throw ConfigError("lambda must be finite and >= 0");
  if (mh_iterations < 1) throw ConfigError("mh_iterations must be positive");
  if (!(std::isfinite(proposal_scale) && proposal_scale >= 0.0))
    throw ConfigError("proposal_scale must be finite and >= 0");
  if ((estimates || stopping.policy != StopPolicy::off) && augmentation_snr.empty())
    throw ConfigError("augmentation_snr must not be empty");
  for (double s : augmentation_snr)
    if (!(std::isfinite(s) && s > 0.0)) throw ConfigError("augmentation SNR levels must be positive");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0))
    throw ConfigError("flip_probability must lie in [0, 1]");
  if (!(std::isfinite(measurement_snr) && measurement_snr >= 0.0))
    throw ConfigError("measurement_snr must be finite and >= 0");
  if (!(std::isfinite(stopping.total_budget) && stopping.total_budget >= 0.0))
    throw ConfigError("total_budget must be finite and >= 0");
  if (stopping.remaining_maps && !(*stopping.remaining_maps >= 0.0))
    throw ConfigError("remaining_maps must be >= 0");
  if (!(std::isfinite(gridscan_seconds) && gridscan_seconds > 0.0))
    throw ConfigError("gridscan_seconds must be positive");
  device.validate();
  prior.validate();
  time.validate();
}

TimeModel ExperimentConfig::effective_time_model() const {
  if (time.per_pixel_read > 0.0) return time;
  try {
    return calibrate_time_model(time, window, gridscan_seconds, initial_rows, initial_cols);
  } catch (const ConfigError&) {
    // Non power-of-two grids have no grid scan; calibrate on raster order.
    TimeModel model = time;
    std::vector<Pixel> raster;
    for (int r = 0; r < window.rows; ++r)
      for (int c = 0; c < window.cols; ++c) raster.push_back({r, c});
    const double fixed = simulated_time(raster, window, model);
    model.per_pixel_read = std::max(0.0, (gridscan_seconds - fixed) / raster.size());
    return model;
  }
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

void read_range(const json& j, const char* key, ParamRange& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(std::string("'") + key + "' must be [min, max]");
  out = {v[0].get<double>(), v[1].get<double>()};
}

void read_axis(const json& j, const char* key, AxisRange& out) {
  ParamRange r{out.min, out.max};
  read_range(j, key, r);
  out = {r.min, r.max};
}

DeviceSampling sampling_from_json(const json& j, DeviceSampling s, const char* where) {
  reject_unknown(j,
                 {"c_source", "c_drain", "c_gate", "n_offset", "level_spacing", "cap_scale_slope",
                  "excited_offset", "transition_probability", "level_jitter", "n_levels"},
                 where);
  read_range(j, "c_source", s.c_source);
  read_range(j, "c_drain", s.c_drain);
  read_range(j, "c_gate", s.c_gate);
  read_range(j, "n_offset", s.n_offset);
  read_range(j, "level_spacing", s.level_spacing);
  read_range(j, "cap_scale_slope", s.cap_scale_slope);
  read_range(j, "excited_offset", s.excited_offset);
  read(j, "transition_probability", s.transition_probability);
  read(j, "level_jitter", s.level_jitter);
  read(j, "n_levels", s.n_levels);
  return s;
}

json sampling_to_json(const DeviceSampling& s) {
  auto r = [](const ParamRange& p) { return json::array({p.min, p.max}); };
  return {{"c_source", r(s.c_source)},
          {"c_drain", r(s.c_drain)},
          {"c_gate", r(s.c_gate)},
          {"n_offset", r(s.n_offset)},
          {"level_spacing", r(s.level_spacing)},
          {"cap_scale_slope", r(s.cap_scale_slope)},
          {"excited_offset", r(s.excited_offset)},
          {"transition_probability", s.transition_probability},
          {"level_jitter", s.level_jitter},
          {"n_levels", s.n_levels}};
}

ExperimentConfig config_from_object(const json& j, ExperimentConfig c) {
  reject_unknown(j,
                 {"mode", "window", "initial_grid", "members", "lambda", "mh_iterations",
                  "proposal_scale", "stopping", "augmentation_snr", "estimates",
                  "flip_probability", "device", "prior", "measurement_snr", "seed", "device_seed",
                  "time_model", "gridscan_seconds", "threads"},
                 "config");
  if (j.contains("mode")) {
    if (!j["mode"].is_string()) throw ConfigError("'mode' must be a string");
    c.mode = parse_mode(j["mode"].get<std::string>());
  }
  if (j.contains("window")) {
    const json& w = j["window"];
    reject_unknown(w, {"axis1", "axis2", "rows", "cols"}, "window");
    read_axis(w, "axis1", c.window.axis1);
    read_axis(w, "axis2", c.window.axis2);
    read(w, "rows", c.window.rows);
    read(w, "cols", c.window.cols);
  }
  if (j.contains("initial_grid")) {
    const json& g = j["initial_grid"];
    if (!g.is_array() || g.size() != 2 || !g[0].is_number_integer() || !g[1].is_number_integer())
      throw ConfigError("'initial_grid' must be [rows, cols]");
    c.initial_rows = g[0].get<int>();
    c.initial_cols = g[1].get<int>();
  }
  read(j, "members", c.members);
  read(j, "lambda", c.lambda);
  read(j, "mh_iterations", c.mh_iterations);
  read(j, "proposal_scale", c.proposal_scale);
  if (j.contains("stopping")) {
    const json& s = j["stopping"];
    reject_unknown(s, {"policy", "total_budget", "remaining_maps", "halt", "beta"}, "stopping");
    if (s.contains("beta")) {
      if (!s["beta"].is_string()) throw ConfigError("'beta' must be a string");
      c.stopping.statistic = parse_beta_statistic(s["beta"].get<std::string>());
    }
    if (s.contains("policy")) {
      if (!s["policy"].is_string()) throw ConfigError("'policy' must be a string");
      c.stopping.policy = parse_stop_policy(s["policy"].get<std::string>());
    }
    read(s, "total_budget", c.stopping.total_budget);
    if (s.contains("remaining_maps")) {
      if (s["remaining_maps"].is_null()) c.stopping.remaining_maps.reset();
      else if (s["remaining_maps"].is_number()) c.stopping.remaining_maps = s["remaining_maps"].get<double>();
      else throw ConfigError("'remaining_maps' must be a number or null");
    }
    read(s, "halt", c.stopping.halt);
  }
  read(j, "augmentation_snr", c.augmentation_snr);
  read(j, "estimates", c.estimates);
  read(j, "flip_probability", c.flip_probability);
  if (j.contains("device")) c.device = sampling_from_json(j["device"], c.device, "device");
  if (j.contains("prior")) c.prior = sampling_from_json(j["prior"], c.prior, "prior");
  read(j, "measurement_snr", c.measurement_snr);
  read(j, "seed", c.seed);
  read(j, "device_seed", c.device_seed);
  if (j.contains("time_model")) {
    const json& t = j["time_model"];
    reject_unknown(t, {"settle_time", "ramp_rate", "per_pixel_read", "include_compute"}, "time_model");
    read(t, "settle_time", c.time.settle_time);
    read(t, "ramp_rate", c.time.ramp_rate);
    read(t, "per_pixel_read", c.time.per_pixel_read);
    read(t, "include_compute", c.time.include_compute);
  }
  read(j, "gridscan_seconds", c.gridscan_seconds);
  read(j, "threads", c.threads);
  c.validate();
  return c;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  return config_from_object(parse_json(text), ExperimentConfig{});
}

std::string config_to_json(const ExperimentConfig& c) {
  json stopping = {{"policy", stop_policy_name(c.stopping.policy)},
                   {"total_budget", c.stopping.total_budget},
                   {"halt", c.stopping.halt},
                   {"beta", beta_statistic_name(c.stopping.statistic)}};
  stopping["remaining_maps"] =
      c.stopping.remaining_maps ? json(*c.stopping.remaining_maps) : json(nullptr);
  json j = {
      {"mode", mode_name(c.mode)},
      {"window",
       {{"axis1", {c.window.axis1.min, c.window.axis1.max}},
        {"axis2", {c.window.axis2.min, c.window.axis2.max}},
        {"rows", c.window.rows},
        {"cols", c.window.cols}}},
      {"initial_grid", {c.initial_rows, c.initial_cols}},
      {"members", c.members},
      {"lambda", c.lambda},
      {"mh_iterations", c.mh_iterations},
      {"proposal_scale", c.proposal_scale},
      {"stopping", stopping},
      {"augmentation_snr", c.augmentation_snr},
      {"estimates", c.estimates},
      {"flip_probability", c.flip_probability},
      {"device", sampling_to_json(c.device)},
      {"prior", sampling_to_json(c.prior)},
      {"measurement_snr", c.measurement_snr},
      {"seed", c.seed},
      {"device_seed", c.device_seed},
      {"time_model",
       {{"settle_time", c.time.settle_time},
        {"ramp_rate", c.time.ramp_rate},
        {"per_pixel_read", c.time.per_pixel_read},
        {"include_compute", c.time.include_compute}}},
      {"gridscan_seconds", c.gridscan_seconds},
      {"threads", c.threads}};
  return j.dump(2);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_file(path));
}

SuiteConfig suite_from_json(const std::string& text) {
  const json j = parse_json(text);
  reject_unknown(j, {"base", "device_seeds"}, "suite");
  SuiteConfig suite;
  if (j.contains("base")) suite.base = config_from_object(j["base"], ExperimentConfig{});
  read(j, "device_seeds", suite.device_seeds);
  if (suite.device_seeds.empty()) throw ConfigError("suite lists no device seeds");
  return suite;
}

SuiteConfig load_suite(const std::filesystem::path& path) { return suite_from_json(read_file(path)); }

}  // namespace qdscan
