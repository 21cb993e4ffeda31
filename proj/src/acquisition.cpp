#include "qdscan/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qdscan {

namespace {

constexpr double kMasked = -std::numeric_limits<double>::infinity();
// Above this lambda * (value spread) the sorted prefix-sum form risks
// overflow, so the direct quadratic form is used.
constexpr double kMaxSortedSpread = 40.0;

double gain_direct(std::span<const double> y, std::span<const double> p, double lambda) {
  double ig = 0.0;
  for (std::size_t m = 0; m < y.size(); ++m) {
    double z = 0.0, s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double d = lambda * std::abs(y[m] - y[k]);
      const double w = p[k] * std::exp(-d);
      z += w;
      s += w * d;
    }
    ig += p[m] * std::max(0.0, -s / z - std::log(z));
  }
  return ig;
}

// exp(-lambda |y_m - y_k|) splits into exp(-u_m) exp(u_k) for y_k <= y_m and
// exp(u_m) exp(-u_k) otherwise, so per-hypothesis sums come from prefix and
// suffix sums over the sorted values.
double gain_sorted(std::span<const double> y, std::span<const double> p, double lambda,
                   double mid) {
  const std::size_t n = y.size();
  thread_local std::vector<std::size_t> order;
  thread_local std::vector<double> u, l1, l2, r1, r2;
  order.resize(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  u.resize(n);
  l1.resize(n);
  l2.resize(n);
  r1.assign(n + 1, 0.0);
  r2.assign(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) u[i] = lambda * (y[order[i]] - mid);
  double a1 = 0.0, a2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = p[order[i]] * std::exp(u[i]);
    a1 += e;
    a2 += e * u[i];
    l1[i] = a1;
    l2[i] = a2;
  }
  for (std::size_t i = n; i-- > 0;) {
    const double e = p[order[i]] * std::exp(-u[i]);
    r1[i] = r1[i + 1] + e;
    r2[i] = r2[i + 1] + e * u[i];
  }
  double ig = 0.0;
  std::size_t group_end = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (group_end <= i) {
      group_end = i;
      while (group_end + 1 < n && y[order[group_end + 1]] == y[order[i]]) ++group_end;
    }
    const std::size_t g = group_end;
    const double down = std::exp(-u[i]);
    const double up = std::exp(u[i]);
    const double z = down * l1[g] + up * r1[g + 1];
    const double s = down * (u[i] * l1[g] - l2[g]) + up * (r2[g + 1] - u[i] * r1[g + 1]);
    ig += p[order[i]] * std::max(0.0, -s / z - std::log(z));
  }
  return ig;
}

}  // namespace

std::size_t AcquisitionMap::unmeasured() const {
  return static_cast<std::size_t>(std::count(mask.flat().begin(), mask.flat().end(), 0));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (!(q[i] > 0.0)) throw DomainError("kl_divergence: p has mass where q has none");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double pixel_information_gain(std::span<const double> values, std::span<const double> weights,
                              double lambda) {
  if (values.size() != weights.size()) throw DomainError("pixel_information_gain: size mismatch");
  thread_local std::vector<double> y, p;
  y.clear();
  p.clear();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    y.push_back(values[i]);
    p.push_back(weights[i]);
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
  }
  if (y.size() < 2 || lambda == 0.0 || lo == hi) return 0.0;
  if (lambda * (hi - lo) <= kMaxSortedSpread) return gain_sorted(y, p, lambda, 0.5 * (lo + hi));
  return gain_direct(y, p, lambda);
}

AcquisitionMap information_gain_map(const ReconstructionEnsemble& ensemble,
                                    const ObservationSet& obs, unsigned threads) {
  ensemble.validate();
  const int rows = ensemble.members.front().values.rows();
  const int cols = ensemble.members.front().values.cols();
  if (obs.rows() != rows || obs.cols() != cols)
    throw DomainError("observation grid differs from ensemble resolution");
  AcquisitionMap acq{Grid<double>(rows, cols, 0.0), obs.mask()};
  const std::size_t members = ensemble.size();
  parallel_for(static_cast<std::size_t>(rows), threads, [&](std::size_t r) {
    std::vector<double> values(members);
    for (int c = 0; c < cols; ++c) {
      if (acq.mask(static_cast<int>(r), c)) {
        acq.values(static_cast<int>(r), c) = kMasked;
        continue;
      }
      for (std::size_t m = 0; m < members; ++m)
        values[m] = ensemble.members[m].values(static_cast<int>(r), c);
      acq.values(static_cast<int>(r), c) =
          pixel_information_gain(values, ensemble.weights, ensemble.lambda);
    }
  });
  return acq;
}

Pixel select_pixel(const AcquisitionMap& acq) {
  std::size_t best = acq.values.size();
  double best_value = kMasked;
  const auto values = acq.values.flat();
  const auto mask = acq.mask.flat();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i]) continue;
    if (best == values.size() || values[i] > best_value) {
      best = i;
      best_value = values[i];
    }
  }
  if (best == values.size()) throw DomainError("every pixel is already measured");
  return acq.values.pixel(best);
}

std::vector<Pixel> top_pixels(const AcquisitionMap& acq, std::size_t k) {
  const auto values = acq.values.flat();
  const auto mask = acq.mask.flat();
  std::vector<std::size_t> idx;
  idx.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!mask[i]) idx.push_back(i);
  k = std::min(k, idx.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return values[a] != values[b] ? values[a] > values[b] : a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  std::vector<Pixel> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(acq.values.pixel(idx[i]));
  return out;
}

double tour_length(Pixel start, std::span<const Pixel> order, const TravelMetric& metric) {
  double total = 0.0;
  Pixel at = start;
  for (Pixel p : order) {
    total += metric.distance(at, p);
    at = p;
  }
  return total;
}

std::vector<Pixel> order_tour(Pixel start, std::vector<Pixel> points, const TravelMetric& metric) {
  if (points.size() < 2) return points;
  std::vector<Pixel> row_major = points;
  std::sort(row_major.begin(), row_major.end());

  // Greedy nearest neighbour; equal distances go to the row-major smaller
  // pixel, which is the earlier entry of the sorted pool.
  const std::size_t n = row_major.size();
  std::vector<char> used(n, 0);
  std::vector<Pixel> greedy;
  greedy.reserve(n);
  Pixel at = start;
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      const double d = metric.distance(at, row_major[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    used[best] = 1;
    at = row_major[best];
    greedy.push_back(at);
  }
  if (tour_length(start, row_major, metric) < tour_length(start, greedy, metric)) return row_major;
  return greedy;
}

BatchPlan select_batch(const AcquisitionMap& acq, std::size_t size, Pixel start,
                       const TravelMetric& metric, int batch_index) {
  BatchPlan plan;
  plan.batch_index = batch_index;
  plan.requested = size;
  const std::size_t remaining = acq.unmeasured();
  plan.truncated = size > remaining;
  plan.locations = order_tour(start, top_pixels(acq, size), metric);
  return plan;
}

AcquisitionMap segmentation_disagreement_map(const GenerativeBackend& backend,
                                             const ReconstructionEnsemble& ensemble,
                                             const ObservationSet& obs, double flip_probability,
                                             unsigned threads) {
  ensemble.validate();
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0))
    throw ConfigError("flip probability must lie in [0, 1]");
  if (ensemble.latents.size() != ensemble.size())
    throw UnsupportedError("segmentation disagreement needs latent vectors for every member");
  const VoltageWindow& window = backend.window();
  std::vector<SegmentationMap> segs(ensemble.size());
  parallel_for(ensemble.size(), threads, [&](std::size_t m) {
    const auto params = backend.device_params(ensemble.latents[m]);
    if (!params) throw UnsupportedError("backend does not expose device parameters");
    segs[m] = simulate_segmentation_map(*params, window);
  });
  AcquisitionMap acq{Grid<double>(window.rows, window.cols, 0.0), obs.mask()};
  if (obs.rows() != window.rows || obs.cols() != window.cols)
    throw DomainError("observation grid differs from backend window");
  for (std::size_t i = 0; i < acq.values.size(); ++i) {
    if (acq.mask.flat()[i]) {
      acq.values.flat()[i] = kMasked;
      continue;
    }
    double q = 0.0;
    for (std::size_t m = 0; m < segs.size(); ++m) {
      const double inside = segs[m].labels.flat()[i] ? 1.0 : flip_probability;
      q += ensemble.weights[m] * inside;
    }
    acq.values.flat()[i] = std::max(0.0, q * (1.0 - q));
  }
  return acq;
}

}  // namespace qdscan
