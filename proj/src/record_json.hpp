#pragma once

#include <fstream>

#include <json.hpp>

#include "qdscan/harness.hpp"

namespace qdscan::detail {

using nlohmann::json;

inline json pixels_json(std::span<const Pixel> pixels) {
  json a = json::array();
  for (Pixel p : pixels) a.push_back({p.row, p.col});
  return a;
}

inline json header_json(const RunRecord& r) {
  return {{"event", "start"},
          {"mode", mode_name(r.mode)},
          {"rows", r.rows},
          {"cols", r.cols},
          {"seed", r.seed},
          {"ground_truth", r.ground_truth}};
}

inline json step_json(const StepEvent& s) {
  return {{"event", "step"},
          {"n", s.n},
          {"locations", pixels_json(s.locations)},
          {"elapsed", s.elapsed},
          {"r", s.r}};
}

inline json decision_json(const DecisionEvent& d) {
  json j = {{"event", "decision"},
            {"n", d.n},
            {"batch_index", d.batch_index},
            {"batch_size", d.batch_size},
            {"best", {d.best.row, d.best.col}},
            {"resampled", d.resampled},
            {"mean_acceptance", d.mean_acceptance},
            {"ig_max", d.ig_max},
            {"ig_mean", d.ig_mean},
            {"weight_entropy", d.weight_entropy},
            {"r", d.r},
            {"elapsed", d.elapsed}};
  j["estimate"] = d.estimate ? json{{"mean", d.estimate->mean},
                                    {"lo90", d.estimate->lo90},
                                    {"hi90", d.estimate->hi90}}
                             : json(nullptr);
  j["stop"] = d.stop ? json{{"stop", d.stop->stop},
                            {"beta", d.stop->beta},
                            {"threshold", d.stop->threshold}}
                     : json(nullptr);
  return j;
}

inline json stop_json(std::size_t n, double elapsed) {
  return {{"event", "stop"}, {"n", n}, {"elapsed", elapsed}};
}

inline json end_json(const RunRecord& r) {
  return {{"event", "end"}, {"total_time", r.total_time}, {"complete", r.complete}};
}

/// Append-only JSONL writer; every event is flushed immediately.
class EventSink {
 public:
  EventSink() = default;
  explicit EventSink(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw RuntimeError("cannot write " + path.string());
  }
  void write(const json& j) {
    if (!out_.is_open()) return;
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace qdscan::detail
