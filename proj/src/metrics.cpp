#include "qdscan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace qdscan {

GradientMap gradient_norm_map(const Grid<double>& y) {
  const int rows = y.rows(), cols = y.cols();
  GradientMap g{Grid<double>(rows, cols, 0.0)};
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double gx = 0.0, gy = 0.0;
      if (cols > 1) {
        if (c == 0) gx = y(r, 1) - y(r, 0);
        else if (c == cols - 1) gx = y(r, c) - y(r, c - 1);
        else gx = 0.5 * (y(r, c + 1) - y(r, c - 1));
      }
      if (rows > 1) {
        if (r == 0) gy = y(1, c) - y(0, c);
        else if (r == rows - 1) gy = y(r, c) - y(r - 1, c);
        else gy = 0.5 * (y(r + 1, c) - y(r - 1, c));
      }
      g.values(r, c) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return g;
}

GradientMap sobel_edge_map(const SegmentationMap& seg) {
  const auto& l = seg.labels;
  const int rows = l.rows(), cols = l.cols();
  auto at = [&](int r, int c) {
    return static_cast<double>(l(std::clamp(r, 0, rows - 1), std::clamp(c, 0, cols - 1)));
  };
  GradientMap g{Grid<double>(rows, cols, 0.0)};
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
      g.values(r, c) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return g;
}

namespace {

double total_mass(const GradientMap& g) {
  double total = 0.0;
  for (double v : g.values.flat()) total += v;
  if (!(total > 0.0)) throw DomainError("gradient map has no mass; r is undefined");
  return total;
}

}  // namespace

double error_r(const Grid<std::uint8_t>& mask, const GradientMap& gradient) {
  if (mask.rows() != gradient.values.rows() || mask.cols() != gradient.values.cols())
    throw DomainError("measurement mask differs from gradient map");
  const double total = total_mass(gradient);
  double measured = 0.0;
  const auto v = gradient.values.flat();
  const auto m = mask.flat();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (m[i]) measured += v[i];
  return 1.0 - measured / total;
}

double error_r(std::span<const Pixel> measured, const GradientMap& gradient) {
  Grid<std::uint8_t> mask(gradient.values.rows(), gradient.values.cols(), 0);
  for (Pixel p : measured) {
    if (!mask.contains(p)) throw DomainError("measured pixel outside gradient map");
    mask[p] = 1;
  }
  return error_r(mask, gradient);
}

std::vector<double> error_curve(std::span<const Pixel> sequence, const GradientMap& gradient) {
  const double total = total_mass(gradient);
  Grid<std::uint8_t> seen(gradient.values.rows(), gradient.values.cols(), 0);
  std::vector<double> curve;
  curve.reserve(sequence.size() + 1);
  curve.push_back(1.0);
  double measured = 0.0;
  for (Pixel p : sequence) {
    if (!seen.contains(p)) throw DomainError("sequence pixel outside gradient map");
    if (!seen[p]) {
      seen[p] = 1;
      measured += gradient.values[p];
    }
    curve.push_back(1.0 - measured / total);
  }
  return curve;
}

std::vector<double> optimal_curve(const GradientMap& gradient) {
  const double total = total_mass(gradient);
  std::vector<double> v(gradient.values.flat().begin(), gradient.values.flat().end());
  std::sort(v.begin(), v.end(), std::greater<>());
  std::vector<double> curve(v.size() + 1);
  curve[0] = 1.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    curve[i + 1] = 1.0 - acc / total;
  }
  curve.back() = 0.0;
  return curve;
}

double optimal_r(const GradientMap& gradient, std::size_t n) {
  if (n > gradient.values.size()) throw DomainError("optimal_r: n exceeds pixel count");
  const double total = total_mass(gradient);
  if (n == gradient.values.size()) return 0.0;
  std::vector<double> v(gradient.values.flat().begin(), gradient.values.flat().end());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n), v.end(), std::greater<>());
  std::sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n), std::greater<>());
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += v[i];
  return 1.0 - acc / total;
}

double weighted_percentile(std::span<const double> values, std::span<const double> weights,
                           double q) {
  if (values.size() != weights.size() || values.empty())
    throw DomainError("weighted_percentile: bad input sizes");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw DegenerateEnsembleError("weights sum to zero");
  double acc = 0.0;
  for (std::size_t i : order) {
    acc += weights[i];
    if (acc >= q * total) return values[i];
  }
  return values[order.back()];
}

RInterval summarize_estimates(std::span<const double> r_members, std::span<const double> weights) {
  if (r_members.size() != weights.size() || r_members.empty())
    throw DomainError("summarize_estimates: bad input sizes");
  double total = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < r_members.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
      throw DegenerateEnsembleError("invalid ensemble weight");
    total += weights[i];
    mean += weights[i] * r_members[i];
  }
  if (!(total > 0.0)) throw DegenerateEnsembleError("ensemble weights sum to zero");
  return {mean / total, weighted_percentile(r_members, weights, 0.05),
          weighted_percentile(r_members, weights, 0.95)};
}

RInterval estimate_r(std::span<const Pixel> measured, const ReconstructionEnsemble& ensemble) {
  ensemble.validate();
  std::vector<double> r(ensemble.size());
  for (std::size_t m = 0; m < ensemble.size(); ++m)
    r[m] = error_r(measured, gradient_norm_map(ensemble.members[m]));
  return summarize_estimates(r, ensemble.weights);
}

MemberEstimates augmented_member_estimates(const ReconstructionEnsemble& ensemble,
                                           std::span<const NoiseProfile> profiles,
                                           std::span<const double> snr_levels,
                                           const Grid<std::uint8_t>& measured_mask,
                                           std::span<const Pixel> next_batch,
                                           unsigned threads) {
  ensemble.validate();
  const std::size_t per_member = profiles.size() * snr_levels.size();
  if (per_member == 0) throw ConfigError("augmentation needs profiles and SNR levels");
  std::vector<double> noise_power;
  for (const auto& p : profiles) {
    if (p.values.rows() != ensemble.members.front().values.rows() ||
        p.values.cols() != ensemble.members.front().values.cols())
      throw DomainError("noise profile resolution differs from reconstruction");
    noise_power.push_back(p.power());
  }

  Grid<std::uint8_t> next_mask = measured_mask;
  for (Pixel p : next_batch) next_mask[p] = 1;

  MemberEstimates out;
  out.r_now.resize(ensemble.size() * per_member);
  out.r_next.resize(out.r_now.size());
  out.weights.resize(out.r_now.size());

  parallel_for(ensemble.size(), threads, [&](std::size_t m) {
    const Grid<double>& base = ensemble.members[m].values;
    double signal = 0.0;
    for (double v : base.flat()) signal += v * v;
    Grid<double> noisy(base.rows(), base.cols());
    std::size_t slot = m * per_member;
    for (std::size_t j = 0; j < profiles.size(); ++j) {
      const auto noise = profiles[j].values.flat();
      for (double snr : snr_levels) {
        const double k = noise_multiplier(signal, noise_power[j], snr);
        auto flat = noisy.flat();
        const auto src = base.flat();
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = src[i] + k * noise[i];
        const GradientMap g = gradient_norm_map(noisy);
        out.r_now[slot] = error_r(measured_mask, g);
        out.r_next[slot] = error_r(next_mask, g);
        out.weights[slot] = ensemble.weights[m] / static_cast<double>(per_member);
        ++slot;
      }
    }
  });
  return out;
}

BetaStatistic parse_beta_statistic(std::string_view name) {
  if (name == "min") return BetaStatistic::minimum;
  if (name == "mean") return BetaStatistic::weighted_mean;
  throw ConfigError("unknown beta statistic '" + std::string(name) + "'");
}

std::string_view beta_statistic_name(BetaStatistic stat) {
  return stat == BetaStatistic::minimum ? "min" : "mean";
}

StopDecision stopping_decide(const StoppingState& s, std::span<const double> r_now,
                             std::span<const double> r_next, std::span<const double> weights,
                             BetaStatistic statistic) {
  if (!(s.batch > 0.0)) throw DomainError("stopping_decide: batch size must be positive");
  if (!(s.pixels_per_map > 0.0)) throw DomainError("stopping_decide: N must be positive");
  if (r_now.empty() || r_now.size() != r_next.size())
    throw DomainError("stopping_decide: estimates missing");
  StopDecision d;
  if (statistic == BetaStatistic::minimum) {
    d.beta = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < r_now.size(); ++m)
      d.beta = std::min(d.beta, std::abs(r_next[m] - r_now[m]) / s.batch);
  } else {
    if (weights.size() != r_now.size()) throw DomainError("stopping_decide: weights missing");
    double total = 0.0, acc = 0.0;
    for (std::size_t m = 0; m < r_now.size(); ++m) {
      if (!(weights[m] >= 0.0) || !std::isfinite(weights[m]))
        throw DegenerateEnsembleError("invalid ensemble weight");
      total += weights[m];
      acc += weights[m] * std::abs(r_next[m] - r_now[m]) / s.batch;
    }
    if (!(total > 0.0)) throw DegenerateEnsembleError("ensemble weights sum to zero");
    d.beta = acc / total;
  }
  const double alpha = s.alpha();
  if (!s.remaining_maps) {
    d.threshold = alpha;
  } else {
    const double cap = s.pixels_per_map * *s.remaining_maps;
    const double left = s.total_budget - s.spent;
    d.threshold = alpha * (std::min(left, cap) - std::min(left - s.batch, cap)) / s.batch;
  }
  d.stop = d.beta < d.threshold;
  return d;
}

std::string_view curve_kind_name(CurveKind kind) {
  switch (kind) {
    case CurveKind::actual: return "actual";
    case CurveKind::estimate_mean: return "est_mean";
    case CurveKind::estimate_lo90: return "est_lo90";
    case CurveKind::estimate_hi90: return "est_hi90";
    case CurveKind::optimal: return "optimal";
    case CurveKind::gridscan: return "gridscan";
  }
  return "unknown";
}

}  // namespace qdscan
