#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdscan {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind { config, parse, domain, runtime, degenerate, unsupported };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ErrorKind::parse, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::domain, w) {}
};
struct RuntimeError : Error {
  explicit RuntimeError(const std::string& w) : Error(ErrorKind::runtime, w) {}
};
struct DegenerateEnsembleError : Error {
  explicit DegenerateEnsembleError(const std::string& w) : Error(ErrorKind::degenerate, w) {}
};
struct UnsupportedError : Error {
  explicit UnsupportedError(const std::string& w) : Error(ErrorKind::unsupported, w) {}
};

// ---------------------------------------------------------------------------
// Pixel grids
// ---------------------------------------------------------------------------

/// Pixel location. Row indexes axis2 (bias), col indexes axis1 (gate).
struct Pixel {
  int row = 0;
  int col = 0;
  auto operator<=>(const Pixel&) const = default;
};

/// Dense row-major 2-D array.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw DomainError("grid dimensions must be nonnegative");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const { return data_[index(r, c)]; }
  T& operator[](Pixel p) { return (*this)(p.row, p.col); }
  const T& operator[](Pixel p) const { return (*this)(p.row, p.col); }

  bool contains(Pixel p) const noexcept {
    return p.row >= 0 && p.col >= 0 && p.row < rows_ && p.col < cols_;
  }
  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * cols_ + c;
  }
  std::size_t index(Pixel p) const noexcept { return index(p.row, p.col); }
  Pixel pixel(std::size_t i) const noexcept {
    return {static_cast<int>(i / cols_), static_cast<int>(i % cols_)};
  }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

struct AxisRange {
  double min = 0.0;
  double max = 1.0;
  bool operator==(const AxisRange&) const = default;
};

/// Voltage extent and resolution of a map. Pixel centres are spaced evenly and
/// include both range endpoints; row 0 sits at axis2.min.
struct VoltageWindow {
  AxisRange axis1;  // gate, horizontal
  AxisRange axis2;  // bias, vertical
  int rows = 128;
  int cols = 128;

  double axis1_step() const noexcept {
    return cols > 1 ? (axis1.max - axis1.min) / (cols - 1) : 0.0;
  }
  double axis2_step() const noexcept {
    return rows > 1 ? (axis2.max - axis2.min) / (rows - 1) : 0.0;
  }
  double axis1_at(int col) const noexcept { return axis1.min + col * axis1_step(); }
  double axis2_at(int row) const noexcept { return axis2.min + row * axis2_step(); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(rows) * cols; }

  void validate() const;
  bool operator==(const VoltageWindow&) const = default;
};

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks so the
/// result never depends on the number of threads as long as body(i) only
/// writes slot i. threads == 0 uses hardware concurrency.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

unsigned resolve_threads(unsigned requested);

/// Deterministic 64-bit seed mixing (splitmix64 finaliser).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace qdscan
