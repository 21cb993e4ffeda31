#pragma once

// Constant-interaction quantum-dot simulator: ground-truth device, prior
// sampler and decoder backend for the reconstruction ensemble.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qdscan/common.hpp"

namespace qdscan {

/// Physical parameters of one dot. Units: |e| = 1, energies and voltages in
/// arbitrary consistent units.
struct DeviceParams {
  double c_source = 1.0;
  double c_drain = 1.0;
  double c_gate = 0.5;
  double n_offset = 0.0;
  /// Single-particle energy E_n of the n-th level (index 0 holds E_1).
  /// Nondecreasing; extended linearly past the end.
  std::vector<double> level_energies;
  /// All capacitances are multiplied by 1 + cap_scale_slope * (N - 1) for the
  /// N-th electron.
  double cap_scale_slope = 0.0;
  /// Excited-state offset above the ground level for electron N (index N-1).
  /// Empty means no excited lines.
  std::vector<double> transition_levels;
  std::uint64_t rng_seed = 0;

  double c_total() const noexcept { return c_source + c_drain + c_gate; }
  double cap_scale(int n_electrons) const noexcept {
    return 1.0 + cap_scale_slope * (n_electrons - 1);
  }
  double level_energy(int n) const;
  double transition_offset(int n) const;
  void validate() const;

  bool operator==(const DeviceParams&) const = default;
};

struct GateVoltages {
  double source = 0.0;
  double drain = 0.0;
  double gate = 0.0;
};

/// U(N). Capacitances are scaled at electron count cap_index (defaults to N).
double total_energy(const DeviceParams& params, int n_electrons, const GateVoltages& v,
                    std::optional<int> cap_index = std::nullopt);

/// mu(N) = U(N) - U(N-1) in closed form, both energies evaluated with the
/// capacitances of the N-th electron.
double electrochemical_potential(const DeviceParams& params, int n_electrons,
                                 const GateVoltages& v);

struct CurrentMap {
  VoltageWindow window;
  Grid<double> values;
  /// Divisor applied by rescaling; raw = values * scale_factor.
  double scale_factor = 1.0;
};

struct SegmentationMap {
  VoltageWindow window;
  Grid<std::uint8_t> labels;  // 1 inside a Coulomb diamond
};

/// Levels of one device relevant to one voltage window.
///
/// Capacitances scale by a common factor per electron, so lever arms are
/// N-independent and mu(N) = charge_[N] - phi(V). A level lies in the bias
/// window when charge_[N] is inside [lo + phi, hi + phi]. Pixel voltages map
/// as V_S = axis2 (bias), V_D = 0, V_G = axis1.
class LevelTable {
 public:
  LevelTable(const DeviceParams& params, const VoltageWindow& window);

  struct Counts {
    int ground = 0;
    int excited = 0;
  };
  Counts count(double v_bias, double v_gate) const;
  /// sign(V_bias) * (ground + excited), with excited lines only counted while
  /// at least one ground level conducts.
  double current(double v_bias, double v_gate) const;
  bool blockaded(double v_bias, double v_gate) const { return count(v_bias, v_gate).ground == 0; }

  void current_at(const VoltageWindow& window, std::span<const Pixel> pixels,
                  std::span<double> out) const;

  std::span<const double> ground_levels() const noexcept { return ground_; }

 private:
  double source_arm_ = 0.0;
  double gate_arm_ = 0.0;
  std::vector<double> ground_;   // sorted
  std::vector<double> excited_;  // sorted
};

CurrentMap simulate_current_map(const DeviceParams& params, const VoltageWindow& window);
SegmentationMap simulate_segmentation_map(const DeviceParams& params, const VoltageWindow& window);

struct ParamRange {
  double min = 0.0;
  double max = 0.0;
};

/// Ranges from which devices are drawn (and onto which latent vectors map).
struct DeviceSampling {
  ParamRange c_source{0.5, 1.5};
  ParamRange c_drain{0.5, 1.5};
  ParamRange c_gate{0.3, 0.7};
  ParamRange n_offset{0.0, 1.0};
  ParamRange level_spacing{0.0, 0.15};
  ParamRange cap_scale_slope{-0.01, 0.03};
  ParamRange excited_offset{0.05, 0.3};
  double transition_probability = 1.0;
  /// Relative per-level jitter of spacings and excited offsets (0 = regular).
  double level_jitter = 0.0;
  int n_levels = 64;

  void validate() const;
};

DeviceParams sample_device_params(std::mt19937_64& rng, const DeviceSampling& config);

enum class NoiseKind { gaussian_white, pink_1_over_f, telegraph };

NoiseKind parse_noise_kind(std::string_view name);
std::string_view noise_kind_name(NoiseKind kind);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian_white;
  double sigma = 1.0;
  /// Telegraph only: per-pixel switching probability along the raster.
  double switch_probability = 0.05;
};

struct NoiseProfile {
  Grid<double> values;
  int profile_index = 1;
  NoiseSpec spec;

  double power() const;
};

/// Zero-mean noise grid. Pink and telegraph noise are correlated along the
/// raster (row-major) order, the order in which a sweep would record them.
NoiseProfile synthesize_noise_profile(const NoiseSpec& spec, int rows, int cols,
                                      std::mt19937_64& rng, int profile_index = 1);

/// The ten reference profiles used for ensemble augmentation.
std::vector<NoiseProfile> standard_noise_profiles(int rows, int cols, std::uint64_t seed);

/// Pixels of a grid_rows x grid_cols uniform subgrid anchored at (0, 0), in
/// row-major order.
std::vector<Pixel> uniform_grid(int rows, int cols, int grid_rows, int grid_cols);

/// Divides the map so that max |value| over `grid` equals 1.
void rescale_to_grid(CurrentMap& map, std::span<const Pixel> grid);

/// Adds white Gaussian noise with the given signal-to-noise power ratio.
void add_measurement_noise(CurrentMap& map, double snr, std::mt19937_64& rng);

}  // namespace qdscan
