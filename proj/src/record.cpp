#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "qdscan/io.hpp"
#include "record_json.hpp"

namespace qdscan {

using detail::json;

void write_run_record(const std::filesystem::path& path, const RunRecord& record) {
  detail::EventSink sink(path);
  sink.write(detail::header_json(record));
  // Interleave steps and decisions in the order the loop produced them: a
  // decision at n precedes the step that leaves n.
  std::size_t d = 0;
  auto flush_decisions = [&](std::size_t upto) {
    while (d < record.decisions.size() && record.decisions[d].n <= upto) {
      sink.write(detail::decision_json(record.decisions[d]));
      if (record.stop_n && record.decisions[d].stop && record.decisions[d].stop->stop &&
          *record.stop_n == record.decisions[d].n)
        sink.write(detail::stop_json(record.decisions[d].n, *record.stop_time));
      ++d;
    }
  };
  std::size_t before = 0;
  for (const auto& s : record.steps) {
    flush_decisions(before);
    sink.write(detail::step_json(s));
    before = s.n;
  }
  flush_decisions(std::numeric_limits<std::size_t>::max());
  sink.write(detail::end_json(record));
}

namespace {

Pixel pixel_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("pixel must be [row, col]");
  return {j[0].get<int>(), j[1].get<int>()};
}

double number_or_nan(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j[key].get<double>();
}

}  // namespace

RunRecord load_run_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  RunRecord r;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string ev = j.at("event").get<std::string>();
      if (ev == "start") {
        r.mode = parse_mode(j.at("mode").get<std::string>());
        r.rows = j.at("rows").get<int>();
        r.cols = j.at("cols").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.ground_truth = j.at("ground_truth").get<std::string>();
        have_header = true;
      } else if (ev == "step") {
        StepEvent s;
        s.n = j.at("n").get<std::size_t>();
        for (const auto& p : j.at("locations")) s.locations.push_back(pixel_from(p));
        s.elapsed = j.at("elapsed").get<double>();
        s.r = j.at("r").get<double>();
        r.steps.push_back(std::move(s));
      } else if (ev == "decision") {
        DecisionEvent d;
        d.n = j.at("n").get<std::size_t>();
        d.batch_index = j.at("batch_index").get<int>();
        d.batch_size = j.at("batch_size").get<std::size_t>();
        d.best = pixel_from(j.at("best"));
        d.resampled = j.at("resampled").get<bool>();
        d.mean_acceptance = number_or_nan(j, "mean_acceptance");
        d.ig_max = number_or_nan(j, "ig_max");
        d.ig_mean = number_or_nan(j, "ig_mean");
        d.weight_entropy = number_or_nan(j, "weight_entropy");
        d.r = j.at("r").get<double>();
        d.elapsed = j.at("elapsed").get<double>();
        if (!j.at("estimate").is_null()) {
          const json& e = j["estimate"];
          d.estimate = RInterval{e.at("mean").get<double>(), e.at("lo90").get<double>(),
                                 e.at("hi90").get<double>()};
        }
        if (!j.at("stop").is_null()) {
          const json& s = j["stop"];
          d.stop = StopDecision{s.at("stop").get<bool>(), s.at("beta").get<double>(),
                                s.at("threshold").get<double>()};
        }
        r.decisions.push_back(std::move(d));
      } else if (ev == "stop") {
        r.stop_n = j.at("n").get<std::size_t>();
        r.stop_time = j.at("elapsed").get<double>();
      } else if (ev == "end") {
        r.total_time = j.at("total_time").get<double>();
        r.complete = j.at("complete").get<bool>();
      } else if (ev != "error") {
        throw ParseError("unknown event '" + ev + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw ParseError(path.string() + ": missing start event");
  if (r.total_time == 0.0 && !r.steps.empty()) r.total_time = r.steps.back().elapsed;
  return r;
}

std::vector<double> actual_curve(const RunRecord& record, const GroundTruth& truth) {
  if (record.ground_truth != truth.fingerprint)
    throw DomainError("record was produced on a different ground truth");
  const auto seq = record.sequence();
  auto curve = error_curve(seq, gradient_norm_map(truth.map));
  if (seq.size() == truth.map.values.size()) curve.back() = 0.0;
  return curve;
}

ErrorCurve edge_error_curve(const RunRecord& record, const GroundTruth& truth) {
  if (!truth.segmentation) throw UnsupportedError("ground truth has no segmentation");
  if (record.ground_truth != truth.fingerprint)
    throw DomainError("record was produced on a different ground truth");
  const auto seq = record.sequence();
  ErrorCurve curve;
  curve.kind = CurveKind::actual;
  curve.r = error_curve(seq, sobel_edge_map(*truth.segmentation));
  if (seq.size() == truth.map.values.size()) curve.r.back() = 0.0;
  curve.n.resize(curve.r.size());
  for (std::size_t i = 0; i < curve.n.size(); ++i) curve.n[i] = i;
  return curve;
}

CompareReport compare_runs(const std::vector<RunRecord>& records, const GroundTruth& truth,
                           const std::vector<std::string>& labels) {
  if (records.size() < 2) throw DomainError("comparison needs at least two records");
  for (const auto& r : records)
    if (r.ground_truth != truth.fingerprint)
      throw DomainError("records refer to different ground truths");
  CompareReport report;
  const GradientMap g = gradient_norm_map(truth.map);
  report.optimal = optimal_curve(g);
  std::size_t longest = 0;
  for (const auto& r : records) longest = std::max(longest, r.measured());
  report.n.resize(longest + 1);
  for (std::size_t i = 0; i <= longest; ++i) report.n[i] = i;

  const double reference = records.front().time_to_stop();
  for (std::size_t k = 0; k < records.size(); ++k) {
    const RunRecord& rec = records[k];
    auto curve = actual_curve(rec, truth);
    RunSummary s;
    s.label = k < labels.size() ? labels[k] : std::string(mode_name(rec.mode)) + "_" + std::to_string(k);
    s.mode = rec.mode;
    s.measured = rec.measured();
    s.stop_n = rec.stop_n;
    s.time_to_stop = rec.time_to_stop();
    s.speedup = s.time_to_stop > 0.0 ? reference / s.time_to_stop : 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const double gap = curve[i] - report.optimal[i];
      s.max_optimality_gap = std::max(s.max_optimality_gap, gap);
      sum += gap;
    }
    s.mean_optimality_gap = sum / static_cast<double>(curve.size());
    curve.resize(longest + 1, std::numeric_limits<double>::quiet_NaN());
    report.curves.push_back(std::move(curve));
    report.runs.push_back(std::move(s));
  }
  report.optimal.resize(longest + 1);
  return report;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out.precision(10);
  return out;
}

void put(std::ostream& out, double v) {
  if (std::isfinite(v)) out << v;
}

PlotSeries series_of(const std::string& name, const std::vector<double>& y, double scale) {
  PlotSeries s{name, {}, {}};
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) continue;
    s.x.push_back(static_cast<double>(i) / scale);
    s.y.push_back(y[i]);
  }
  return s;
}

}  // namespace

void write_compare_report(const std::filesystem::path& dir, const CompareReport& report) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "summary.csv");
    out << "label,mode,measured,stop_n,time_to_stop,speedup,max_optimality_gap,mean_optimality_gap\n";
    for (const auto& s : report.runs) {
      out << s.label << ',' << mode_name(s.mode) << ',' << s.measured << ',';
      if (s.stop_n) out << *s.stop_n;
      out << ',' << s.time_to_stop << ',' << s.speedup << ',' << s.max_optimality_gap << ','
          << s.mean_optimality_gap << '\n';
    }
  }
  {
    auto out = open_out(dir / "curves.csv");
    out << 'n';
    for (const auto& s : report.runs) out << ',' << s.label;
    out << ",optimal\n";
    for (std::size_t i = 0; i < report.n.size(); ++i) {
      out << report.n[i];
      for (const auto& c : report.curves) {
        out << ',';
        put(out, c[i]);
      }
      out << ',';
      put(out, report.optimal[i]);
      out << '\n';
    }
  }
  std::vector<PlotSeries> series;
  const double scale = report.n.empty() ? 1.0 : static_cast<double>(report.n.back());
  for (std::size_t k = 0; k < report.curves.size(); ++k)
    series.push_back(series_of(report.runs[k].label, report.curves[k], scale));
  series.push_back(series_of("optimal", report.optimal, scale));
  write_line_plot_png(dir / "curves.png", series);
}

void write_run_artifacts(const std::filesystem::path& dir, const RunRecord& record,
                         const GroundTruth& truth, const ExperimentConfig& config) {
  std::filesystem::create_directories(dir);
  const auto actual = actual_curve(record, truth);
  const GradientMap g = gradient_norm_map(truth.map);
  const auto optimal = optimal_curve(g);
  std::vector<double> grid;
  try {
    const auto seq = gridscan_sequence(truth.map.values.rows(), truth.map.values.cols(),
                                       config.initial_rows, config.initial_cols);
    grid = error_curve(seq, g);
    grid.back() = 0.0;
  } catch (const ConfigError&) {
  }
  std::map<std::size_t, RInterval> est;
  for (const auto& d : record.decisions)
    if (d.estimate) est[d.n] = *d.estimate;

  auto out = open_out(dir / "curves.csv");
  out << "n,actual,est_mean,est_lo90,est_hi90,optimal,gridscan\n";
  for (std::size_t n = 0; n < actual.size(); ++n) {
    out << n << ',' << actual[n] << ',';
    if (auto it = est.find(n); it != est.end())
      out << it->second.mean << ',' << it->second.lo90 << ',' << it->second.hi90;
    else
      out << ",,";
    out << ',' << optimal[n] << ',';
    if (n < grid.size()) out << grid[n];
    out << '\n';
  }
  out.close();

  const double scale = static_cast<double>(truth.map.values.size());
  std::vector<PlotSeries> series{series_of("actual", actual, scale),
                                 series_of("optimal", optimal, scale)};
  if (!grid.empty()) series.push_back(series_of("gridscan", grid, scale));
  PlotSeries mean{"est_mean", {}, {}};
  for (const auto& [n, e] : est) {
    mean.x.push_back(static_cast<double>(n) / scale);
    mean.y.push_back(e.mean);
  }
  if (!mean.x.empty()) series.push_back(std::move(mean));
  write_line_plot_png(dir / "curves.png", series);

  save_map_csv(dir / "ground_truth.csv", truth.map);
  write_grayscale_png(dir / "ground_truth.png", truth.map.values);
  Grid<double> mask(truth.map.values.rows(), truth.map.values.cols(), 0.0);
  for (Pixel p : record.sequence()) mask[p] = 1.0;
  write_grayscale_png(dir / "measured.png", mask);
  if (truth.segmentation) {
    Grid<double> seg(mask.rows(), mask.cols(), 0.0);
    for (std::size_t i = 0; i < seg.size(); ++i) seg.flat()[i] = truth.segmentation->labels.flat()[i];
    write_grayscale_png(dir / "segmentation.png", seg);
  }
}

}  // namespace qdscan
