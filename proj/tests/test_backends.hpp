#pragma once

#include "qdscan/posterior.hpp"

// Decoder whose every pixel equals the first latent coordinate; the other
// coordinates only feel the prior.
class ConstantBackend final : public qdscan::GenerativeBackend {
 public:
  explicit ConstantBackend(std::size_t dim = 1, int rows = 2, int cols = 2)
      : dim_(dim), window_{{0.0, 1.0}, {0.0, 1.0}, rows, cols} {}

  std::size_t latent_dim() const override { return dim_; }
  const qdscan::VoltageWindow& window() const override { return window_; }

  qdscan::CurrentMap decode(std::span<const double> z, const qdscan::ConditioningInput&,
                            qdscan::DecodeDiagnostics* = nullptr) const override {
    return {window_, qdscan::Grid<double>(window_.rows, window_.cols, z[0]), 1.0};
  }
  void decode_at(std::span<const double> z, const qdscan::ConditioningInput&,
                 std::span<const qdscan::Pixel> pixels, std::span<double> out,
                 qdscan::DecodeDiagnostics* = nullptr) const override {
    for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = z[0];
  }

 private:
  std::size_t dim_;
  qdscan::VoltageWindow window_;
};
