// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qdscan/qdscan.h"

namespace fs = std::filesystem;

namespace {

constexpr int exit_config = 1;
constexpr int exit_runtime = 2;
constexpr int exit_truth = 3;

struct Failure {
  int code;
};

int exit_code(qds_status s) {
  switch (s) {
    case QDS_OK: return 0;
    case QDS_ERR_CONFIG:
    case QDS_ERR_ARGUMENT: return exit_config;
    case QDS_ERR_PARSE: return exit_truth;
    default: return exit_runtime;
  }
}

void check(qds_status s, const char* what, std::optional<int> code = {}) {
  if (s == QDS_OK) return;
  std::fprintf(stderr, "qdscan: %s: %s: %s\n", what, qds_status_name(s), qds_last_error());
  throw Failure{code.value_or(exit_code(s))};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<qds_config, Deleter<qds_config, qds_config_free>>;
using Truth = std::unique_ptr<qds_truth, Deleter<qds_truth, qds_truth_free>>;
using Run = std::unique_ptr<qds_run, Deleter<qds_run, qds_run_free>>;
using Report = std::unique_ptr<qds_report, Deleter<qds_report, qds_report_free>>;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> device_seed;
  std::string mode;
  std::string out;
  std::string stop;
  double budget = 0.0;
  double remaining = -1.0;
  bool no_halt = false;
  std::optional<unsigned> threads;
  std::string map;
  std::vector<std::string> runs;
  std::vector<std::string> labels;
};

Config make_config(const Options& o) {
  qds_config* raw = nullptr;
  if (o.config.empty())
    check(qds_config_default(&raw), "config");
  else
    check(qds_config_load(o.config.c_str(), &raw), "config", exit_config);
  Config c(raw);
  if (o.seed) check(qds_config_set_seed(c.get(), *o.seed), "--seed");
  if (o.device_seed) check(qds_config_set_device_seed(c.get(), *o.device_seed), "--device-seed");
  if (!o.mode.empty()) check(qds_config_set_mode(c.get(), o.mode.c_str()), "--mode");
  if (!o.stop.empty() || o.budget > 0.0 || o.remaining >= 0.0) {
    std::string policy = o.stop;
    if (policy.empty()) policy = "budget";
    check(qds_config_set_stopping(c.get(), policy.c_str(), o.budget, o.remaining), "--stop");
  }
  if (o.no_halt) check(qds_config_set_halt(c.get(), 0), "--no-halt");
  if (o.threads) check(qds_config_set_threads(c.get(), *o.threads), "--threads");
  return c;
}

Truth simulate_truth(const qds_config* c) {
  qds_truth* raw = nullptr;
  check(qds_truth_simulate(c, &raw), "ground truth", exit_truth);
  return Truth(raw);
}

Truth load_truth(const std::string& path) {
  qds_truth* raw = nullptr;
  check(qds_truth_load(path.c_str(), &raw), "ground truth", exit_truth);
  return Truth(raw);
}

void print_run(const qds_run* run) {
  qds_run_info info{};
  check(qds_run_get_info(run, &info), "run");
  std::printf("mode %s measured %zu", info.mode, info.measured);
  if (info.stopped) std::printf(" stop_n %zu stop_time %.2f", info.stop_n, info.stop_time);
  std::printf(" total_time %.2f time_to_stop %.2f\n", info.total_time, info.time_to_stop);
}

Run execute(const qds_config* c, const qds_truth* t, const std::string& out) {
  qds_run* raw = nullptr;
  check(qds_run_execute(c, t, out.empty() ? nullptr : out.c_str(), &raw), "run");
  Run run(raw);
  print_run(run.get());
  return run;
}

void save_config(const qds_config* c, const std::string& out) {
  if (out.empty()) return;
  fs::create_directories(out);
  char* json = nullptr;
  check(qds_config_to_json(c, &json), "config");
  std::FILE* f = std::fopen((fs::path(out) / "config.json").string().c_str(), "w");
  if (!f) {
    qds_string_free(json);
    std::fprintf(stderr, "qdscan: cannot write %s/config.json\n", out.c_str());
    throw Failure{exit_runtime};
  }
  std::fputs(json, f);
  std::fputc('\n', f);
  std::fclose(f);
  qds_string_free(json);
}

void cmd_simulate(const Options& o) {
  Config c = make_config(o);
  Truth t = simulate_truth(c.get());
  check(qds_truth_save(t.get(), o.out.c_str()), "write");
  save_config(c.get(), o.out);
  std::printf("ground truth %s\n", qds_truth_fingerprint(t.get()));
}

void cmd_run(const Options& o, const char* forced_mode) {
  Options opts = o;
  if (forced_mode) opts.mode = forced_mode;
  Config c = make_config(opts);
  Truth t = opts.map.empty() ? simulate_truth(c.get()) : load_truth(opts.map);
  save_config(c.get(), opts.out);
  execute(c.get(), t.get(), opts.out);
}

std::string events_file(const std::string& path) {
  return fs::is_directory(path) ? (fs::path(path) / "events.jsonl").string() : path;
}

void cmd_compare(const Options& o) {
  if (o.runs.size() < 2) {
    std::fprintf(stderr, "qdscan: compare needs at least two runs\n");
    throw Failure{exit_config};
  }
  if (!o.labels.empty() && o.labels.size() != o.runs.size()) {
    std::fprintf(stderr, "qdscan: --labels must name every run\n");
    throw Failure{exit_config};
  }
  std::vector<Run> runs;
  std::vector<const qds_run*> ptrs;
  for (const auto& r : o.runs) {
    qds_run* raw = nullptr;
    check(qds_run_load(events_file(r).c_str(), &raw), r.c_str());
    runs.emplace_back(raw);
    ptrs.push_back(raw);
  }
  std::string map = o.map;
  if (map.empty() && fs::is_directory(o.runs.front()))
    map = (fs::path(o.runs.front()) / "ground_truth.csv").string();
  Truth t;
  if (!map.empty() && fs::exists(map)) {
    t = load_truth(map);
  } else {
    Config c = make_config(o);
    t = simulate_truth(c.get());
  }
  std::vector<const char*> labels;
  for (const auto& l : o.labels) labels.push_back(l.c_str());
  qds_report* raw = nullptr;
  check(qds_compare(ptrs.data(), labels.empty() ? nullptr : labels.data(), ptrs.size(), t.get(), &raw),
        "compare");
  Report report(raw);
  if (!o.out.empty()) check(qds_report_write(report.get(), o.out.c_str()), "write");
  std::printf("%-16s %-18s %8s %8s %12s %8s %8s\n", "label", "mode", "measured", "stop_n",
              "time_to_stop", "speedup", "max_gap");
  for (size_t i = 0; i < qds_report_size(report.get()); ++i) {
    qds_run_summary s{};
    check(qds_report_summary(report.get(), i, &s), "compare");
    std::printf("%-16s %-18s %8zu %8s %12.2f %8.3f %8.4f\n", s.label, s.mode, s.measured,
                s.stopped ? std::to_string(s.stop_n).c_str() : "-", s.time_to_stop, s.speedup,
                s.max_optimality_gap);
  }
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "seed for sampling and the simulated device");
  sub->add_option("--device-seed", o.device_seed, "override the simulated device seed");
}

void add_run_flags(CLI::App* sub, Options& o, bool mode) {
  if (mode)
    sub->add_option("--mode", o.mode, "acquisition mode")
        ->check(CLI::IsMember({"batch", "pixelwise", "gridscan", "segmentation_batch"}));
  sub->add_option("--stop", o.stop, "stopping policy")
      ->check(CLI::IsMember({"off", "infinite", "budget"}));
  sub->add_option("--budget", o.budget, "total pixel budget T (budget policy)");
  sub->add_option("--remaining", o.remaining, "further maps K (budget policy)");
  sub->add_flag("--no-halt", o.no_halt, "log the stop point but measure the full map");
  sub->add_option("--threads", o.threads, "worker threads (0 = hardware)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active acquisition of charge-transport maps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", qds_version());
  Options o;

  auto* simulate = app.add_subcommand("simulate", "write a simulated ground-truth map");
  add_common(simulate, o);
  simulate->add_option("--out", o.out, "output directory")->required();

  auto* run = app.add_subcommand("run", "active acquisition on a simulated device");
  add_common(run, o);
  add_run_flags(run, o, true);
  run->add_option("--out", o.out, "output directory");

  auto* gridscan = app.add_subcommand("gridscan", "alternating grid-scan baseline");
  add_common(gridscan, o);
  gridscan->add_option("--map", o.map, "recorded map CSV instead of a simulated device")
      ->check(CLI::ExistingFile);
  gridscan->add_option("--out", o.out, "output directory");

  auto* replay = app.add_subcommand("replay", "acquisition on a recorded map");
  add_common(replay, o);
  add_run_flags(replay, o, true);
  replay->add_option("--map", o.map, "recorded map CSV")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", o.out, "output directory");

  auto* compare = app.add_subcommand("compare", "compare runs on one ground truth");
  add_common(compare, o);
  compare->add_option("runs", o.runs, "run directories or events.jsonl files")->required();
  compare->add_option("--labels", o.labels, "one label per run");
  compare->add_option("--map", o.map, "ground-truth map CSV")->check(CLI::ExistingFile);
  compare->add_option("--out", o.out, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }

  try {
    if (*simulate) cmd_simulate(o);
    else if (*run) cmd_run(o, nullptr);
    else if (*gridscan) cmd_run(o, "gridscan");
    else if (*replay) cmd_run(o, nullptr);
    else if (*compare) cmd_compare(o);
  } catch (const Failure& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "qdscan: %s\n", e.what());
    return exit_runtime;
  }
  return 0;
}
