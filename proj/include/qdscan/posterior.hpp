#pragma once

// Discrete posterior over candidate reconstructions.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "qdscan/common.hpp"
#include "qdscan/device.hpp"

namespace qdscan {

using Latent = std::vector<double>;

/// Ordered measurements Y_n. Locations are unique and inside the grid.
class ObservationSet {
 public:
  ObservationSet() = default;
  ObservationSet(int rows, int cols) : mask_(rows, cols, 0) {}

  /// Throws DomainError for a location outside the grid or already measured.
  void add(Pixel x, double y);
  bool contains(Pixel x) const { return mask_.contains(x) && mask_[x] != 0; }

  std::size_t size() const noexcept { return locations_.size(); }
  int rows() const noexcept { return mask_.rows(); }
  int cols() const noexcept { return mask_.cols(); }
  std::span<const Pixel> locations() const noexcept { return locations_; }
  std::span<const double> values() const noexcept { return values_; }
  const Grid<std::uint8_t>& mask() const noexcept { return mask_; }

 private:
  std::vector<Pixel> locations_;
  std::vector<double> values_;
  Grid<std::uint8_t> mask_;
};

/// Initial uniform-grid scan handed to the decoder alongside z.
struct ConditioningInput {
  std::vector<Pixel> pixels;
  std::vector<double> values;

  static ConditioningInput from_map(const CurrentMap& map, std::span<const Pixel> pixels);
};

struct DecodeDiagnostics {
  bool clamped = false;
  double offset = 0.0;
  double scale = 1.0;
  double fit_l1 = 0.0;
};

/// Generator of full-resolution reconstructions from a latent vector with a
/// standard-normal prior.
class GenerativeBackend {
 public:
  virtual ~GenerativeBackend() = default;

  virtual std::size_t latent_dim() const = 0;
  virtual const VoltageWindow& window() const = 0;

  virtual CurrentMap decode(std::span<const double> z, const ConditioningInput& cond,
                            DecodeDiagnostics* diag = nullptr) const = 0;

  /// Decoded values at selected pixels only; must agree with decode().
  virtual void decode_at(std::span<const double> z, const ConditioningInput& cond,
                         std::span<const Pixel> pixels, std::span<double> out,
                         DecodeDiagnostics* diag = nullptr) const = 0;

  /// Physical parameters behind z, when the backend has them.
  virtual std::optional<DeviceParams> device_params(std::span<const double> z) const {
    (void)z;
    return std::nullopt;
  }
};

struct AffineFit {
  double offset = 0.0;
  double scale = 1.0;
  double l1 = 0.0;
};

/// Minimises sum |target - (offset + scale * raw)| over offset and scale >= 0.
AffineFit fit_affine_l1(std::span<const double> raw, std::span<const double> target);

/// Decoder built on the constant-interaction simulator. Each latent
/// coordinate maps through the standard-normal CDF onto one sampling range:
/// c_source, c_drain, c_gate, n_offset, level_spacing, cap_scale_slope,
/// excited_offset.
class PhysicsBackend final : public GenerativeBackend {
 public:
  static constexpr std::size_t kLatentDim = 7;
  /// Latent coordinates beyond this magnitude are clamped.
  static constexpr double kLatentClamp = 8.0;

  PhysicsBackend(VoltageWindow window, DeviceSampling ranges);

  std::size_t latent_dim() const override { return kLatentDim; }
  const VoltageWindow& window() const override { return window_; }

  CurrentMap decode(std::span<const double> z, const ConditioningInput& cond,
                    DecodeDiagnostics* diag = nullptr) const override;
  void decode_at(std::span<const double> z, const ConditioningInput& cond,
                 std::span<const Pixel> pixels, std::span<double> out,
                 DecodeDiagnostics* diag = nullptr) const override;
  std::optional<DeviceParams> device_params(std::span<const double> z) const override;

  DeviceParams params_from_latent(std::span<const double> z, bool* clamped = nullptr) const;
  /// Inverse map for devices in the backend's parametric family.
  Latent latent_from_params(const DeviceParams& params) const;

  const DeviceSampling& ranges() const noexcept { return ranges_; }

 private:
  AffineFit fit(const LevelTable& table, const ConditioningInput& cond) const;

  VoltageWindow window_;
  DeviceSampling ranges_;
};

struct ReconstructionEnsemble {
  std::vector<CurrentMap> members;
  /// Latent vector per member; empty for noise-augmented ensembles.
  std::vector<Latent> latents;
  std::vector<double> weights;
  std::size_t n_s = 0;
  double lambda = 1.0;

  std::size_t size() const noexcept { return members.size(); }
  /// Weights nonnegative and summing to one, members sharing a resolution.
  void validate() const;
};

/// -lambda * sum |y - recon(x)| over observations [begin, end).
double log_likelihood(const ObservationSet& obs, const CurrentMap& recon, double lambda,
                      std::size_t begin = 0, std::size_t end = static_cast<std::size_t>(-1));

/// Max-subtracted softmax. Throws DegenerateEnsembleError if no weight is
/// finite.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

/// P_n(m; n_s) from the observations acquired after the last resampling.
std::vector<double> posterior_weights(const ReconstructionEnsemble& ensemble,
                                      const ObservationSet& obs);

/// Weights after additionally observing y at x (x must be unmeasured).
std::vector<double> update_weights_incremental(const ReconstructionEnsemble& ensemble,
                                               const ObservationSet& obs, Pixel x, double y);

struct MhOptions {
  int iterations = 400;
  /// Standard deviation of the isotropic Gaussian proposal (0.5 -> I/4).
  double proposal_scale = 0.5;
  unsigned threads = 0;
  /// Start chains from previous members drawn in proportion to their current
  /// weights (systematic resampling) instead of one chain per member.
  bool weighted_starts = false;
};

struct MhDiagnostics {
  std::vector<double> acceptance_rate;   // per chain
  std::vector<double> mean_loglik;       // per iteration, averaged over chains
  std::size_t clamped_decodes = 0;
};

/// M members decoded from independent prior draws, uniform weights.
ReconstructionEnsemble prior_ensemble(const GenerativeBackend& backend,
                                      const ConditioningInput& cond, std::size_t members,
                                      double lambda, std::uint64_t seed);

/// Systematic resampling: M indices where index m appears floor or ceil of
/// M * weights[m] times, in nondecreasing order. Uniform weights give 0..M-1.
std::vector<std::size_t> systematic_resample(std::span<const double> weights, double u);

/// One random-walk Metropolis-Hastings chain per member, started from a
/// previous member's latent vector, targeting p(z) * exp(log_likelihood(obs, decode(z))).
/// Returns the final chain states with uniform weights and n_s = obs.size().
ReconstructionEnsemble mh_resample(const GenerativeBackend& backend,
                                   const ReconstructionEnsemble& ensemble,
                                   const ObservationSet& obs, const ConditioningInput& cond,
                                   const MhOptions& options, std::uint64_t seed,
                                   MhDiagnostics* diagnostics = nullptr);

/// Noise multiplier giving signal_power / (multiplier^2 * noise_power) == snr.
double noise_multiplier(double signal_power, double noise_power, double snr);

/// Every member spawns one variant per (profile, snr) pair:
/// member + multiplier * profile. Variants share the member weight equally.
ReconstructionEnsemble augment_noisy(const ReconstructionEnsemble& ensemble,
                                     std::span<const NoiseProfile> profiles,
                                     std::span<const double> snr_levels);

}  // namespace qdscan
