#include "qdscan/device.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qdscan {

namespace {

constexpr int kMaxElectrons = 100000;

double uniform_in(std::mt19937_64& rng, ParamRange r) {
  const double u = std::generate_canonical<double, 53>(rng);
  return r.min + (r.max - r.min) * u;
}

void check_range(const char* name, ParamRange r, bool positive) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.min > r.max)
    throw ConfigError(std::string("invalid range for ") + name);
  if (positive && r.min <= 0.0)
    throw ConfigError(std::string("range for ") + name + " must be strictly positive");
}

}  // namespace

double DeviceParams::level_energy(int n) const {
  if (n < 1 || level_energies.empty()) return 0.0;
  const int size = static_cast<int>(level_energies.size());
  if (n <= size) return level_energies[n - 1];
  const double step = size >= 2 ? level_energies[size - 1] - level_energies[size - 2] : 0.0;
  return level_energies[size - 1] + step * (n - size);
}

double DeviceParams::transition_offset(int n) const {
  if (n < 1 || transition_levels.empty()) return 0.0;
  const int size = static_cast<int>(transition_levels.size());
  return transition_levels[std::min(n, size) - 1];
}

void DeviceParams::validate() const {
  if (!(c_source > 0.0 && c_drain > 0.0 && c_gate > 0.0))
    throw DomainError("capacitances must be strictly positive");
  if (!std::isfinite(n_offset) || !std::isfinite(cap_scale_slope))
    throw DomainError("non-finite device parameter");
  for (std::size_t i = 0; i < level_energies.size(); ++i) {
    if (!std::isfinite(level_energies[i]) || level_energies[i] < 0.0)
      throw DomainError("level energies must be finite and nonnegative");
    if (i > 0 && level_energies[i] < level_energies[i - 1])
      throw DomainError("level energies must be nondecreasing");
  }
  for (double t : transition_levels)
    if (!std::isfinite(t)) throw DomainError("non-finite transition level");
}

double total_energy(const DeviceParams& params, int n_electrons, const GateVoltages& v,
                    std::optional<int> cap_index) {
  if (n_electrons < 0) throw DomainError("total_energy: negative electron number");
  const double f = params.cap_scale(cap_index.value_or(n_electrons));
  if (f <= 0.0) throw DomainError("capacitance scaling became nonpositive");
  const double cs = params.c_source * f;
  const double cd = params.c_drain * f;
  const double cg = params.c_gate * f;
  const double c_total = cs + cd + cg;
  const double charge = -(n_electrons - params.n_offset) + cs * v.source + cd * v.drain + cg * v.gate;
  double levels = 0.0;
  for (int n = 1; n <= n_electrons; ++n) levels += params.level_energy(n);
  return charge * charge / (2.0 * c_total) + levels;
}

double electrochemical_potential(const DeviceParams& params, int n_electrons,
                                 const GateVoltages& v) {
  if (n_electrons < 1) throw DomainError("electrochemical_potential: N must be >= 1");
  const double f = params.cap_scale(n_electrons);
  if (f <= 0.0) throw DomainError("capacitance scaling became nonpositive");
  const double cs = params.c_source * f;
  const double cd = params.c_drain * f;
  const double cg = params.c_gate * f;
  const double c_total = cs + cd + cg;
  return (n_electrons - params.n_offset - 0.5) / c_total -
         (v.source * cs + v.drain * cd + v.gate * cg) / c_total + params.level_energy(n_electrons);
}

// ---------------------------------------------------------------------------
// LevelTable
// ---------------------------------------------------------------------------

LevelTable::LevelTable(const DeviceParams& params, const VoltageWindow& window) {
  const double c_total = params.c_total();
  source_arm_ = params.c_source / c_total;
  gate_arm_ = params.c_gate / c_total;

  // Range of phi = arm_s * V_S + arm_g * V_G and of the window edges.
  const double phi_a = source_arm_ * window.axis2.min, phi_b = source_arm_ * window.axis2.max;
  const double phi_c = gate_arm_ * window.axis1.min, phi_d = gate_arm_ * window.axis1.max;
  const double phi_lo = std::min(phi_a, phi_b) + std::min(phi_c, phi_d);
  const double phi_hi = std::max(phi_a, phi_b) + std::max(phi_c, phi_d);
  const double edge_lo = std::min({-window.axis2.max, -window.axis2.min, 0.0});
  const double edge_hi = std::max({-window.axis2.max, -window.axis2.min, 0.0});
  const double keep_lo = edge_lo + phi_lo;
  const double keep_hi = edge_hi + phi_hi;

  const bool excited = !params.transition_levels.empty();
  for (int n = 1;; ++n) {
    if (n > kMaxElectrons) throw DomainError("level table did not terminate; check parameters");
    const double f = params.cap_scale(n);
    if (f <= 0.0) throw DomainError("capacitance scaling became nonpositive");
    const double charge = (n - params.n_offset - 0.5) / (c_total * f) + params.level_energy(n);
    const double exc = excited ? charge + params.transition_offset(n) : charge;
    if (charge >= keep_lo && charge <= keep_hi) ground_.push_back(charge);
    if (excited && exc >= keep_lo && exc <= keep_hi) excited_.push_back(exc);
    if (charge > keep_hi && (!excited || exc > keep_hi)) break;
  }
  std::sort(ground_.begin(), ground_.end());
  std::sort(excited_.begin(), excited_.end());
}

LevelTable::Counts LevelTable::count(double v_bias, double v_gate) const {
  const double phi = source_arm_ * v_bias + gate_arm_ * v_gate;
  const double lo = std::min(-v_bias, 0.0) + phi;
  const double hi = std::max(-v_bias, 0.0) + phi;
  auto in_window = [lo, hi](const std::vector<double>& levels) {
    const auto first = std::lower_bound(levels.begin(), levels.end(), lo);
    const auto last = std::upper_bound(first, levels.end(), hi);
    return static_cast<int>(last - first);
  };
  Counts c;
  c.ground = in_window(ground_);
  if (c.ground > 0 && !excited_.empty()) c.excited = in_window(excited_);
  return c;
}

double LevelTable::current(double v_bias, double v_gate) const {
  if (v_bias == 0.0) return 0.0;
  const Counts c = count(v_bias, v_gate);
  if (c.ground == 0) return 0.0;
  const double magnitude = c.ground + c.excited;
  return v_bias > 0.0 ? magnitude : -magnitude;
}

void LevelTable::current_at(const VoltageWindow& window, std::span<const Pixel> pixels,
                            std::span<double> out) const {
  for (std::size_t i = 0; i < pixels.size(); ++i)
    out[i] = current(window.axis2_at(pixels[i].row), window.axis1_at(pixels[i].col));
}

CurrentMap simulate_current_map(const DeviceParams& params, const VoltageWindow& window) {
  window.validate();
  const LevelTable table(params, window);
  CurrentMap map{window, Grid<double>(window.rows, window.cols), 1.0};
  for (int r = 0; r < window.rows; ++r) {
    const double vb = window.axis2_at(r);
    for (int c = 0; c < window.cols; ++c) map.values(r, c) = table.current(vb, window.axis1_at(c));
  }
  return map;
}

SegmentationMap simulate_segmentation_map(const DeviceParams& params, const VoltageWindow& window) {
  window.validate();
  const LevelTable table(params, window);
  SegmentationMap seg{window, Grid<std::uint8_t>(window.rows, window.cols)};
  for (int r = 0; r < window.rows; ++r) {
    const double vb = window.axis2_at(r);
    for (int c = 0; c < window.cols; ++c)
      seg.labels(r, c) = table.blockaded(vb, window.axis1_at(c)) ? 1 : 0;
  }
  return seg;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

void DeviceSampling::validate() const {
  check_range("c_source", c_source, true);
  check_range("c_drain", c_drain, true);
  check_range("c_gate", c_gate, true);
  check_range("n_offset", n_offset, false);
  check_range("level_spacing", level_spacing, false);
  check_range("cap_scale_slope", cap_scale_slope, false);
  check_range("excited_offset", excited_offset, false);
  if (level_spacing.min < 0.0) throw ConfigError("level_spacing must be nonnegative");
  if (!(transition_probability >= 0.0 && transition_probability <= 1.0))
    throw ConfigError("transition_probability must lie in [0, 1]");
  if (!(level_jitter >= 0.0 && level_jitter < 1.0))
    throw ConfigError("level_jitter must lie in [0, 1)");
  if (n_levels < 1) throw ConfigError("n_levels must be positive");
}

DeviceParams sample_device_params(std::mt19937_64& rng, const DeviceSampling& config) {
  config.validate();
  DeviceParams p;
  p.c_source = uniform_in(rng, config.c_source);
  p.c_drain = uniform_in(rng, config.c_drain);
  p.c_gate = uniform_in(rng, config.c_gate);
  p.n_offset = uniform_in(rng, config.n_offset);
  const double spacing = uniform_in(rng, config.level_spacing);
  p.cap_scale_slope = uniform_in(rng, config.cap_scale_slope);
  const double excited = uniform_in(rng, config.excited_offset);
  const bool with_transitions =
      std::generate_canonical<double, 53>(rng) < config.transition_probability;

  auto jitter = [&] {
    return 1.0 + config.level_jitter * (2.0 * std::generate_canonical<double, 53>(rng) - 1.0);
  };
  p.level_energies.resize(config.n_levels);
  double e = 0.0;
  for (int n = 0; n < config.n_levels; ++n) {
    if (n > 0) e += spacing * jitter();
    p.level_energies[n] = e;
  }
  if (with_transitions) {
    p.transition_levels.resize(config.n_levels);
    for (auto& t : p.transition_levels) t = excited * jitter();
  }
  p.rng_seed = rng();
  return p;
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gaussian_white") return NoiseKind::gaussian_white;
  if (name == "pink_1_over_f") return NoiseKind::pink_1_over_f;
  if (name == "telegraph") return NoiseKind::telegraph;
  throw ConfigError("unknown noise kind '" + std::string(name) + "'");
}

std::string_view noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian_white: return "gaussian_white";
    case NoiseKind::pink_1_over_f: return "pink_1_over_f";
    case NoiseKind::telegraph: return "telegraph";
  }
  return "unknown";
}

double NoiseProfile::power() const {
  double s = 0.0;
  for (double v : values.flat()) s += v * v;
  return s;
}

NoiseProfile synthesize_noise_profile(const NoiseSpec& spec, int rows, int cols,
                                      std::mt19937_64& rng, int profile_index) {
  if (rows <= 0 || cols <= 0) throw ConfigError("noise profile dimensions must be positive");
  if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma))
    throw ConfigError("noise sigma must be finite and nonnegative");
  NoiseProfile profile{Grid<double>(rows, cols), profile_index, spec};
  auto flat = profile.values.flat();
  std::normal_distribution<double> normal(0.0, 1.0);

  switch (spec.kind) {
    case NoiseKind::gaussian_white:
      for (double& v : flat) v = spec.sigma * normal(rng);
      break;
    case NoiseKind::pink_1_over_f: {
      // Voss-McCartney: source k is redrawn every 2^k samples.
      constexpr int kSources = 16;
      std::vector<double> sources(kSources);
      for (double& s : sources) s = normal(rng);
      double sum = 0.0;
      for (double s : sources) sum += s;
      for (std::size_t i = 0; i < flat.size(); ++i) {
        for (int k = 0; k < kSources; ++k) {
          if (i % (std::size_t{1} << k) == 0) {
            const double fresh = normal(rng);
            sum += fresh - sources[k];
            sources[k] = fresh;
          }
        }
        flat[i] = sum + normal(rng);
      }
      break;
    }
    case NoiseKind::telegraph: {
      if (!(spec.switch_probability >= 0.0 && spec.switch_probability <= 1.0))
        throw ConfigError("telegraph switch probability must lie in [0, 1]");
      double state = std::generate_canonical<double, 53>(rng) < 0.5 ? -1.0 : 1.0;
      for (double& v : flat) {
        if (std::generate_canonical<double, 53>(rng) < spec.switch_probability) state = -state;
        v = state;
      }
      break;
    }
  }

  double mean = 0.0;
  for (double v : flat) mean += v;
  mean /= static_cast<double>(flat.size());
  for (double& v : flat) v -= mean;

  if (spec.kind != NoiseKind::gaussian_white) {
    // Normalise correlated kinds to standard deviation sigma.
    double var = 0.0;
    for (double v : flat) var += v * v;
    var /= static_cast<double>(flat.size());
    const double k = var > 0.0 ? spec.sigma / std::sqrt(var) : 0.0;
    for (double& v : flat) v *= k;
  }
  return profile;
}

std::vector<NoiseProfile> standard_noise_profiles(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<NoiseProfile> profiles;
  profiles.reserve(10);
  for (int j = 1; j <= 10; ++j) {
    NoiseSpec spec;
    if (j <= 4) {
      spec.kind = NoiseKind::gaussian_white;
    } else if (j <= 7) {
      spec.kind = NoiseKind::pink_1_over_f;
    } else {
      spec.kind = NoiseKind::telegraph;
      spec.switch_probability = 0.01 * (j - 7);
    }
    profiles.push_back(synthesize_noise_profile(spec, rows, cols, rng, j));
  }
  return profiles;
}

// ---------------------------------------------------------------------------
// Rescaling
// ---------------------------------------------------------------------------

std::vector<Pixel> uniform_grid(int rows, int cols, int grid_rows, int grid_cols) {
  if (grid_rows < 1 || grid_cols < 1 || grid_rows > rows || grid_cols > cols)
    throw ConfigError("uniform grid does not fit the map");
  std::vector<Pixel> pixels;
  pixels.reserve(static_cast<std::size_t>(grid_rows) * grid_cols);
  for (int i = 0; i < grid_rows; ++i)
    for (int j = 0; j < grid_cols; ++j)
      pixels.push_back({static_cast<int>(static_cast<long>(i) * rows / grid_rows),
                        static_cast<int>(static_cast<long>(j) * cols / grid_cols)});
  return pixels;
}

void rescale_to_grid(CurrentMap& map, std::span<const Pixel> grid) {
  double peak = 0.0;
  for (Pixel p : grid) {
    if (!map.values.contains(p)) throw DomainError("rescale grid pixel outside map");
    peak = std::max(peak, std::abs(map.values[p]));
  }
  if (!(peak > 0.0) || !std::isfinite(peak))
    throw DomainError("initial measurement is identically zero; cannot rescale");
  for (double& v : map.values.flat()) v /= peak;
  map.scale_factor *= peak;
}

void add_measurement_noise(CurrentMap& map, double snr, std::mt19937_64& rng) {
  if (!(snr > 0.0)) throw ConfigError("measurement SNR must be positive");
  double power = 0.0;
  for (double v : map.values.flat()) power += v * v;
  const double sigma = std::sqrt(power / static_cast<double>(map.values.size()) / snr);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : map.values.flat()) v += sigma * normal(rng);
}

}  // namespace qdscan
