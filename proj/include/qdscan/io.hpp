#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qdscan/common.hpp"
#include "qdscan/device.hpp"

namespace qdscan {

/// Current-map CSV:
///   # axis1 <min> <max>
///   # axis2 <min> <max>
///   rows of comma-separated values, row 0 first (row 0 = axis2 minimum).
/// Values are written with 17 significant digits so a load is bit-identical.
void save_map_csv(const std::filesystem::path& path, const CurrentMap& map);
void save_grid_csv(const std::filesystem::path& path, const Grid<double>& grid,
                   const VoltageWindow& window);

/// Loads a recorded map. Values are returned as stored (scale_factor 1);
/// rescaling happens when the experiment starts.
CurrentMap load_recorded_map(const std::filesystem::path& path);

std::string device_params_to_json(const DeviceParams& params);
DeviceParams device_params_from_json(const std::string& text);

/// 8-bit grayscale PNG, min -> black, max -> white. Non-finite cells render
/// black.
void write_grayscale_png(const std::filesystem::path& path, const Grid<double>& grid);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Renders line series on a white canvas, one gray level per series, with y
/// fixed to [0, 1].
void write_line_plot_png(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                         int width = 640, int height = 400);

}  // namespace qdscan
