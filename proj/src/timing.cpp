#include <cmath>

#include "qdscan/harness.hpp"

namespace qdscan {

void TimeModel::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!ok(settle_time) || !ok(ramp_rate) || !ok(per_pixel_read))
    throw ConfigError("time model values must be finite and nonnegative");
}

double ramp_time(const TimeModel& model, const VoltageWindow& window, Pixel a, Pixel b) {
  if (model.ramp_rate == 0.0) return 0.0;
  const double d1 = std::abs(a.col - b.col) * window.axis1_step();
  const double d2 = std::abs(a.row - b.row) * window.axis2_step();
  return std::max(d1, d2) / model.ramp_rate;
}

double simulated_time(std::span<const Pixel> sequence, const VoltageWindow& window,
                      const TimeModel& model, Pixel start) {
  double total = 0.0;
  Pixel at = start;
  for (Pixel p : sequence) {
    total += model.settle_time + model.per_pixel_read + ramp_time(model, window, at, p);
    at = p;
  }
  return total;
}

TravelMetric travel_metric(const TimeModel& model, const VoltageWindow& window) {
  if (model.ramp_rate == 0.0) return {0.0, 0.0};
  return {window.axis2_step() / model.ramp_rate, window.axis1_step() / model.ramp_rate};
}

TimeModel calibrate_time_model(TimeModel model, const VoltageWindow& window,
                               double gridscan_seconds, int initial_rows, int initial_cols) {
  model.validate();
  const auto seq = gridscan_sequence(window.rows, window.cols, initial_rows, initial_cols);
  model.per_pixel_read = 0.0;
  const double fixed = simulated_time(seq, window, model);
  const double read = (gridscan_seconds - fixed) / static_cast<double>(seq.size());
  if (!(read >= 0.0))
    throw ConfigError("settle and ramp times alone exceed the grid-scan target");
  model.per_pixel_read = read;
  return model;
}

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

std::vector<std::vector<Pixel>> gridscan_stages(int rows, int cols, int initial_rows,
                                                int initial_cols) {
  if (!power_of_two(rows) || !power_of_two(cols))
    throw ConfigError("grid scan needs a power-of-two resolution on both axes");
  if (!power_of_two(initial_rows) || !power_of_two(initial_cols) || initial_rows > rows ||
      initial_cols > cols)
    throw ConfigError("initial grid must be a power of two no larger than the resolution");

  Grid<std::uint8_t> seen(rows, cols, 0);
  std::vector<std::vector<Pixel>> stages;
  auto add_stage = [&](int gr, int gc) {
    const int sr = rows / gr, sc = cols / gc;
    std::vector<Pixel> stage;
    for (int i = 0; i < gr; ++i)
      for (int j = 0; j < gc; ++j) {
        const Pixel p{i * sr, j * sc};
        if (!seen[p]) {
          seen[p] = 1;
          stage.push_back(p);
        }
      }
    stages.push_back(std::move(stage));
  };

  int gr = initial_rows, gc = initial_cols;
  add_stage(gr, gc);
  bool rows_turn = true;
  while (gr < rows || gc < cols) {
    if (rows_turn ? gr < rows : gc >= cols) gr *= 2;
    else gc *= 2;
    rows_turn = !rows_turn;
    add_stage(gr, gc);
  }
  return stages;
}

std::vector<Pixel> gridscan_sequence(int rows, int cols, int initial_rows, int initial_cols) {
  std::vector<Pixel> seq;
  for (auto& stage : gridscan_stages(rows, cols, initial_rows, initial_cols))
    seq.insert(seq.end(), stage.begin(), stage.end());
  return seq;
}

}  // namespace qdscan
