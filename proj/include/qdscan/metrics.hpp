#pragma once

// Gradient-mass error r(n), its ensemble estimate, the optimal bound and the
// stopping rule.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "qdscan/common.hpp"
#include "qdscan/device.hpp"
#include "qdscan/posterior.hpp"

namespace qdscan {

/// v(x) = |grad Y(x)|_2 in value units per pixel step.
struct GradientMap {
  Grid<double> values;
};

/// Central differences inside, one-sided differences on the border.
GradientMap gradient_norm_map(const Grid<double>& values);
inline GradientMap gradient_norm_map(const CurrentMap& map) { return gradient_norm_map(map.values); }

/// Sobel edge magnitude of a binary segmentation (replicated border).
GradientMap sobel_edge_map(const SegmentationMap& seg);

/// 1 - (gradient mass at measured pixels) / (total mass). Duplicate pixels
/// count once. Throws DomainError for an all-zero gradient map.
double error_r(std::span<const Pixel> measured, const GradientMap& gradient);
double error_r(const Grid<std::uint8_t>& measured_mask, const GradientMap& gradient);

/// r after each prefix of `sequence`; element n is r(n), element 0 is 1.
std::vector<double> error_curve(std::span<const Pixel> sequence, const GradientMap& gradient);

/// 1 - (sum of the n largest v) / (total mass).
double optimal_r(const GradientMap& gradient, std::size_t n);
/// optimal_r for every n in [0, N].
std::vector<double> optimal_curve(const GradientMap& gradient);

/// Smallest value whose cumulative normalised weight reaches q.
double weighted_percentile(std::span<const double> values, std::span<const double> weights,
                           double q);

struct RInterval {
  double mean = 0.0;
  double lo90 = 0.0;
  double hi90 = 0.0;
};

/// Weighted mean and 5th / 95th weighted percentiles of per-member estimates.
RInterval summarize_estimates(std::span<const double> r_members, std::span<const double> weights);

/// r estimated from each member's own gradient map.
RInterval estimate_r(std::span<const Pixel> measured, const ReconstructionEnsemble& ensemble);

/// Per-variant estimates r_m(n) and r_m(n + delta) for the noise-augmented
/// ensemble, computed without materialising the variants. Variant order
/// and weights match augment_noisy().
struct MemberEstimates {
  std::vector<double> r_now;
  std::vector<double> r_next;
  std::vector<double> weights;
};

MemberEstimates augmented_member_estimates(const ReconstructionEnsemble& ensemble,
                                           std::span<const NoiseProfile> profiles,
                                           std::span<const double> snr_levels,
                                           const Grid<std::uint8_t>& measured_mask,
                                           std::span<const Pixel> next_batch,
                                           unsigned threads = 0);

struct StoppingState {
  double spent = 0.0;          // t
  double total_budget = 0.0;   // T
  std::optional<double> remaining_maps;  // K; nullopt means unlimited
  double batch = 1.0;          // delta
  double pixels_per_map = 1.0; // N

  double alpha() const { return 1.0 / pixels_per_map; }
};

struct StopDecision {
  bool stop = false;
  double beta = 0.0;
  double threshold = 0.0;
};

/// How the per-member slopes beta_m = |r_m(n + delta) - r_m(n)| / delta are
/// combined into beta.
enum class BetaStatistic {
  minimum,       // worst case over members
  weighted_mean  // posterior expectation; needs weights
};

BetaStatistic parse_beta_statistic(std::string_view name);
std::string_view beta_statistic_name(BetaStatistic stat);

/// Stops when beta is strictly below alpha (unlimited maps) or below the
/// budget-capped threshold alpha * (min(T - t, N K) - min(T - t - delta, N K)) / delta.
StopDecision stopping_decide(const StoppingState& state, std::span<const double> r_now,
                             std::span<const double> r_next,
                             std::span<const double> weights = {},
                             BetaStatistic statistic = BetaStatistic::minimum);

enum class CurveKind { actual, estimate_mean, estimate_lo90, estimate_hi90, optimal, gridscan };
std::string_view curve_kind_name(CurveKind kind);

struct ErrorCurve {
  CurveKind kind = CurveKind::actual;
  std::vector<std::size_t> n;
  std::vector<double> r;
};

}  // namespace qdscan
