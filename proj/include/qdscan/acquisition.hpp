#pragma once

// Expected-information-gain acquisition and measurement selection.

#include <cstdint>
#include <span>
#include <vector>

#include "qdscan/common.hpp"
#include "qdscan/posterior.hpp"

namespace qdscan {

/// Per-pixel acquisition values. Measured pixels hold -infinity.
struct AcquisitionMap {
  Grid<double> values;
  Grid<std::uint8_t> mask;  // 1 = measured

  std::size_t unmeasured() const;
};

struct BatchPlan {
  std::vector<Pixel> locations;  // travel order
  int batch_index = 0;
  std::size_t requested = 0;
  bool truncated = false;
};

/// KL(p || q) in nats with 0 * log(0 / q) = 0. Throws DomainError when p puts
/// mass where q has none, or when sizes differ.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Expected information gain at one pixel: sum_m P(m) KL(P' || P), where P'
/// is the posterior after observing members[m]'s value there.
double pixel_information_gain(std::span<const double> values, std::span<const double> weights,
                              double lambda);

/// IG(x) for every unmeasured pixel, using the ensemble's current weights.
AcquisitionMap information_gain_map(const ReconstructionEnsemble& ensemble,
                                    const ObservationSet& obs, unsigned threads = 0);

/// argmax over unmeasured pixels; ties go to the first pixel in row-major
/// order. Throws DomainError when every pixel is measured.
Pixel select_pixel(const AcquisitionMap& acq);

/// The k highest unmeasured pixels (row-major tie-break), best first.
std::vector<Pixel> top_pixels(const AcquisitionMap& acq, std::size_t k);

/// Cost of moving the probe between pixels. Both axes ramp concurrently so a
/// move costs the slower of the two.
struct TravelMetric {
  double row_cost = 1.0;  // per pixel step along axis2
  double col_cost = 1.0;  // per pixel step along axis1

  double distance(Pixel a, Pixel b) const {
    const double dr = std::abs(a.row - b.row) * row_cost;
    const double dc = std::abs(a.col - b.col) * col_cost;
    return dr > dc ? dr : dc;
  }
};

double tour_length(Pixel start, std::span<const Pixel> order, const TravelMetric& metric);

/// Greedy nearest-neighbour tour from `start`; falls back to row-major order
/// when that is shorter.
std::vector<Pixel> order_tour(Pixel start, std::vector<Pixel> points, const TravelMetric& metric);

/// Top-`size` pixels ordered for travel. A request larger than the number of
/// unmeasured pixels is truncated and flagged.
BatchPlan select_batch(const AcquisitionMap& acq, std::size_t size, Pixel start = {},
                       const TravelMetric& metric = {}, int batch_index = 0);

/// Weighted label variance q(1 - q) across member segmentations, where
/// exterior labels flip to 1 with `flip_probability` in expectation.
AcquisitionMap segmentation_disagreement_map(const GenerativeBackend& backend,
                                             const ReconstructionEnsemble& ensemble,
                                             const ObservationSet& obs, double flip_probability,
                                             unsigned threads = 0);

}  // namespace qdscan
