#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/erf.hpp>

#include "qdscan/posterior.hpp"

namespace qdscan {

namespace {

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double standard_normal_quantile(double u) {
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

double lower_median(std::vector<double>& v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

AffineFit fit_affine_l1(std::span<const double> raw, std::span<const double> target) {
  if (raw.size() != target.size()) throw DomainError("fit_affine_l1: size mismatch");
  AffineFit best;
  if (raw.empty()) return best;

  thread_local std::vector<double> scratch;
  scratch.resize(raw.size());

  double raw_min_nonzero = std::numeric_limits<double>::infinity();
  double target_peak = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != 0.0) raw_min_nonzero = std::min(raw_min_nonzero, std::abs(raw[i]));
    target_peak = std::max(target_peak, std::abs(target[i]));
  }

  // For fixed scale the optimal offset is a median of the residuals; the
  // remaining one-dimensional objective is convex.
  auto evaluate = [&](double scale) {
    for (std::size_t i = 0; i < raw.size(); ++i) scratch[i] = target[i] - scale * raw[i];
    const double offset = lower_median(scratch);
    double l1 = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) l1 += std::abs(target[i] - offset - scale * raw[i]);
    return AffineFit{offset, scale, l1};
  };

  if (!std::isfinite(raw_min_nonzero)) return evaluate(1.0);

  double lo = 0.0;
  double hi = 4.0 * target_peak / raw_min_nonzero + 1e-12;
  best = evaluate(0.0);
  const AffineFit at_hi = evaluate(hi);
  if (at_hi.l1 < best.l1) best = at_hi;

  constexpr double kInvPhi = 0.6180339887498949;
  double a = hi - kInvPhi * (hi - lo);
  double b = lo + kInvPhi * (hi - lo);
  AffineFit fa = evaluate(a), fb = evaluate(b);
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
    if (fa.l1 <= fb.l1) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - kInvPhi * (hi - lo);
      fa = evaluate(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + kInvPhi * (hi - lo);
      fb = evaluate(b);
    }
  }
  for (const AffineFit& f : {fa, fb})
    if (f.l1 < best.l1) best = f;
  return best;
}

// ---------------------------------------------------------------------------
// PhysicsBackend
// ---------------------------------------------------------------------------

PhysicsBackend::PhysicsBackend(VoltageWindow window, DeviceSampling ranges)
    : window_(window), ranges_(ranges) {
  window_.validate();
  ranges_.validate();
}

DeviceParams PhysicsBackend::params_from_latent(std::span<const double> z, bool* clamped) const {
  if (z.size() != kLatentDim) throw DomainError("latent dimension mismatch");
  bool any_clamped = false;
  auto unit = [&](std::size_t k) {
    double v = z[k];
    if (!std::isfinite(v)) {
      v = 0.0;
      any_clamped = true;
    } else if (std::abs(v) > kLatentClamp) {
      v = std::copysign(kLatentClamp, v);
      any_clamped = true;
    }
    return standard_normal_cdf(v);
  };
  auto map = [&](std::size_t k, ParamRange r) { return r.min + (r.max - r.min) * unit(k); };

  DeviceParams p;
  p.c_source = map(0, ranges_.c_source);
  p.c_drain = map(1, ranges_.c_drain);
  p.c_gate = map(2, ranges_.c_gate);
  p.n_offset = map(3, ranges_.n_offset);
  const double spacing = map(4, ranges_.level_spacing);
  p.cap_scale_slope = map(5, ranges_.cap_scale_slope);
  const double excited = map(6, ranges_.excited_offset);
  p.level_energies.resize(ranges_.n_levels);
  for (int n = 0; n < ranges_.n_levels; ++n) p.level_energies[n] = spacing * n;
  if (ranges_.transition_probability > 0.0) p.transition_levels.assign(ranges_.n_levels, excited);
  if (clamped) *clamped = any_clamped;
  return p;
}

Latent PhysicsBackend::latent_from_params(const DeviceParams& p) const {
  auto inv = [](double value, ParamRange r) {
    if (r.max == r.min) return 0.0;
    const double u = std::clamp((value - r.min) / (r.max - r.min), 1e-15, 1.0 - 1e-15);
    return standard_normal_quantile(u);
  };
  const double spacing =
      p.level_energies.size() >= 2 ? p.level_energies[1] - p.level_energies[0] : 0.0;
  const double excited =
      p.transition_levels.empty() ? ranges_.excited_offset.min : p.transition_levels.front();
  return {inv(p.c_source, ranges_.c_source),
          inv(p.c_drain, ranges_.c_drain),
          inv(p.c_gate, ranges_.c_gate),
          inv(p.n_offset, ranges_.n_offset),
          inv(spacing, ranges_.level_spacing),
          inv(p.cap_scale_slope, ranges_.cap_scale_slope),
          inv(excited, ranges_.excited_offset)};
}

std::optional<DeviceParams> PhysicsBackend::device_params(std::span<const double> z) const {
  return params_from_latent(z);
}

AffineFit PhysicsBackend::fit(const LevelTable& table, const ConditioningInput& cond) const {
  thread_local std::vector<double> raw;
  raw.resize(cond.pixels.size());
  table.current_at(window_, cond.pixels, raw);
  return fit_affine_l1(raw, cond.values);
}

CurrentMap PhysicsBackend::decode(std::span<const double> z, const ConditioningInput& cond,
                                  DecodeDiagnostics* diag) const {
  bool clamped = false;
  const DeviceParams params = params_from_latent(z, &clamped);
  const LevelTable table(params, window_);
  const AffineFit f = fit(table, cond);
  CurrentMap map{window_, Grid<double>(window_.rows, window_.cols), 1.0};
  for (int r = 0; r < window_.rows; ++r) {
    const double vb = window_.axis2_at(r);
    for (int c = 0; c < window_.cols; ++c)
      map.values(r, c) = f.offset + f.scale * table.current(vb, window_.axis1_at(c));
  }
  if (diag) *diag = {clamped, f.offset, f.scale, f.l1};
  return map;
}

void PhysicsBackend::decode_at(std::span<const double> z, const ConditioningInput& cond,
                               std::span<const Pixel> pixels, std::span<double> out,
                               DecodeDiagnostics* diag) const {
  if (out.size() < pixels.size()) throw DomainError("decode_at: output span too small");
  bool clamped = false;
  const DeviceParams params = params_from_latent(z, &clamped);
  const LevelTable table(params, window_);
  const AffineFit f = fit(table, cond);
  table.current_at(window_, pixels, out);
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = f.offset + f.scale * out[i];
  if (diag) *diag = {clamped, f.offset, f.scale, f.l1};
}

}  // namespace qdscan
