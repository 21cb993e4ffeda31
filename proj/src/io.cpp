#include "qdscan/io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace qdscan {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(std::string_view token, const std::string& context) {
  const std::string t = trim(token);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
    throw ParseError("malformed number '" + t + "' at " + context);
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + t + "' at " + context);
  return v;
}

AxisRange parse_axis_header(const std::string& line, const char* name, int line_no) {
  std::istringstream in(line);
  std::string hash, label, lo, hi, extra;
  in >> hash >> label >> lo >> hi;
  if (hash != "#" || label != name || lo.empty() || hi.empty() || (in >> extra))
    throw ParseError("line " + std::to_string(line_no) + ": expected '# " + name +
                     " <min> <max>'");
  const std::string ctx = "line " + std::to_string(line_no);
  return {parse_number(lo, ctx), parse_number(hi, ctx)};
}

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* file = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (file) std::fclose(file);
  }
};

void write_gray8(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint8_t>& pixels) {
  PngWriter w;
  w.file = std::fopen(path.string().c_str(), "wb");
  if (!w.file) throw RuntimeError("cannot open " + path.string() + " for writing");
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw RuntimeError("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw RuntimeError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw RuntimeError("libpng error writing " + path.string());
  png_init_io(w.png, w.file);
  png_set_IHDR(w.png, w.info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  for (int y = 0; y < height; ++y)
    png_write_row(w.png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * width));
  png_write_end(w.png, nullptr);
}

}  // namespace

void save_grid_csv(const std::filesystem::path& path, const Grid<double>& grid,
                   const VoltageWindow& window) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot open " + path.string() + " for writing");
  out << "# axis1 " << format_double(window.axis1.min) << ' ' << format_double(window.axis1.max)
      << '\n';
  out << "# axis2 " << format_double(window.axis2.min) << ' ' << format_double(window.axis2.max)
      << '\n';
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      if (c) out << ',';
      out << format_double(grid(r, c));
    }
    out << '\n';
  }
  if (!out) throw RuntimeError("write failed for " + path.string());
}

void save_map_csv(const std::filesystem::path& path, const CurrentMap& map) {
  save_grid_csv(path, map.values, map.window);
}

CurrentMap load_recorded_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open recorded map " + path.string());
  std::string line;
  int line_no = 0;

  auto next_line = [&](std::string& out) {
    while (std::getline(in, out)) {
      ++line_no;
      if (!trim(out).empty()) return true;
    }
    return false;
  };

  if (!next_line(line)) throw ParseError(path.string() + ": empty file");
  const AxisRange axis1 = parse_axis_header(line, "axis1", line_no);
  if (!next_line(line)) throw ParseError(path.string() + ": missing axis2 header");
  const AxisRange axis2 = parse_axis_header(line, "axis2", line_no);

  std::vector<double> values;
  int cols = -1;
  int rows = 0;
  while (next_line(line)) {
    int c = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell =
          std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                          : comma - start);
      values.push_back(parse_number(
          cell, "row " + std::to_string(rows) + ", col " + std::to_string(c) + " (line " +
                    std::to_string(line_no) + ")"));
      ++c;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cols < 0) {
      cols = c;
    } else if (c != cols) {
      throw ParseError("non-rectangular grid: row " + std::to_string(rows) + " has " +
                       std::to_string(c) + " columns, expected " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(path.string() + ": no data rows");

  VoltageWindow window{axis1, axis2, rows, cols};
  if (!(axis1.min < axis1.max) || !(axis2.min < axis2.max))
    throw ParseError(path.string() + ": axis ranges must satisfy min < max");
  CurrentMap map{window, Grid<double>(rows, cols), 1.0};
  std::copy(values.begin(), values.end(), map.values.flat().begin());
  return map;
}

std::string device_params_to_json(const DeviceParams& p) {
  nlohmann::json j;
  j["c_source"] = p.c_source;
  j["c_drain"] = p.c_drain;
  j["c_gate"] = p.c_gate;
  j["n_offset"] = p.n_offset;
  j["level_energies"] = p.level_energies;
  j["cap_scale_slope"] = p.cap_scale_slope;
  j["transition_levels"] = p.transition_levels;
  j["rng_seed"] = p.rng_seed;
  return j.dump(2);
}

DeviceParams device_params_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    DeviceParams p;
    p.c_source = j.at("c_source").get<double>();
    p.c_drain = j.at("c_drain").get<double>();
    p.c_gate = j.at("c_gate").get<double>();
    p.n_offset = j.value("n_offset", 0.0);
    p.level_energies = j.value("level_energies", std::vector<double>{});
    p.cap_scale_slope = j.value("cap_scale_slope", 0.0);
    p.transition_levels = j.value("transition_levels", std::vector<double>{});
    p.rng_seed = j.value("rng_seed", std::uint64_t{0});
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("device params JSON: ") + e.what());
  } catch (const DomainError& e) {
    throw ParseError(std::string("device params JSON: ") + e.what());
  }
}

void write_grayscale_png(const std::filesystem::path& path, const Grid<double>& grid) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : grid.flat()) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<std::uint8_t> pixels(grid.size());
  // Image row 0 is the top, so flip to put axis2 minimum at the bottom.
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      const double v = grid(r, c);
      const double t = std::isfinite(v) ? (v - lo) / span : 0.0;
      pixels[grid.index(grid.rows() - 1 - r, c)] =
          static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * t), 0L, 255L));
    }
  }
  write_gray8(path, grid.cols(), grid.rows(), pixels);
}

void write_line_plot_png(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                         int width, int height) {
  constexpr int kMargin = 20;
  std::vector<std::uint8_t> canvas(static_cast<std::size_t>(width) * height, 255);
  double x_max = 1.0;
  for (const auto& s : series)
    for (double x : s.x) x_max = std::max(x_max, x);

  auto plot = [&](int px, int py, std::uint8_t shade) {
    if (px >= 0 && py >= 0 && px < width && py < height)
      canvas[static_cast<std::size_t>(py) * width + px] = shade;
  };
  auto to_px = [&](double x, double y) {
    const double fx = x / x_max;
    const double fy = std::clamp(y, 0.0, 1.0);
    return std::pair<int, int>{kMargin + static_cast<int>(std::lround(fx * (width - 2 * kMargin))),
                               height - kMargin -
                                   static_cast<int>(std::lround(fy * (height - 2 * kMargin)))};
  };
  // Axes.
  for (int x = kMargin; x < width - kMargin; ++x) plot(x, height - kMargin, 0);
  for (int y = kMargin; y <= height - kMargin; ++y) plot(kMargin, y, 0);

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto shade = static_cast<std::uint8_t>(160 * k / std::max<std::size_t>(1, series.size()));
    const auto& s = series[k];
    for (std::size_t i = 1; i < std::min(s.x.size(), s.y.size()); ++i) {
      auto [x0, y0] = to_px(s.x[i - 1], s.y[i - 1]);
      const auto [x1, y1] = to_px(s.x[i], s.y[i]);
      // Bresenham.
      const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
      const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
      int err = dx + dy;
      while (true) {
        plot(x0, y0, shade);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
      }
    }
  }
  write_gray8(path, width, height, canvas);
}

}  // namespace qdscan
