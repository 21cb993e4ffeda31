#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "qdscan/qdscan.h"

namespace {

const char* kSmall = R"({
  "window": {"axis1": [0, 5], "axis2": [-0.4, 0.4], "rows": 32, "cols": 32},
  "members": 10, "mh_iterations": 20, "threads": 1,
  "stopping": {"policy": "off"}
})";

std::string temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "qdscan_capi" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("status names and errors") {
    CHECK(std::strcmp(qds_status_name(QDS_OK), "ok") == 0);
    CHECK(std::strlen(qds_version()) > 0);
    qds_config* cfg = nullptr;
    CHECK(qds_config_parse("{\"membrs\": 3}", &cfg) == QDS_ERR_CONFIG);
    CHECK(cfg == nullptr);
    CHECK(std::string(qds_last_error()).find("membrs") != std::string::npos);
    CHECK(qds_config_parse(nullptr, &cfg) == QDS_ERR_ARGUMENT);
    CHECK(qds_config_load("/nonexistent/config.json", &cfg) != QDS_OK);
    qds_truth* truth = nullptr;
    CHECK(qds_truth_load("/nonexistent/map.csv", &truth) == QDS_ERR_PARSE);
  }

  TEST_CASE("config round trip and setters") {
    qds_config* cfg = nullptr;
    REQUIRE(qds_config_default(&cfg) == QDS_OK);
    CHECK(qds_config_set_mode(cfg, "pixelwise") == QDS_OK);
    CHECK(qds_config_set_mode(cfg, "spiral") == QDS_ERR_CONFIG);
    CHECK(qds_config_set_stopping(cfg, "budget", 5000, 2) == QDS_OK);
    CHECK(qds_config_set_seed(cfg, 9) == QDS_OK);
    char* json = nullptr;
    REQUIRE(qds_config_to_json(cfg, &json) == QDS_OK);
    const std::string text = json;
    qds_string_free(json);
    CHECK(text.find("pixelwise") != std::string::npos);
    qds_config* back = nullptr;
    REQUIRE(qds_config_parse(text.c_str(), &back) == QDS_OK);
    char* again = nullptr;
    REQUIRE(qds_config_to_json(back, &again) == QDS_OK);
    CHECK(text == again);
    qds_string_free(again);
    qds_config_free(back);
    qds_config_free(cfg);
  }

  TEST_CASE("simulate, run, replay and compare") {
    qds_config* cfg = nullptr;
    REQUIRE(qds_config_parse(kSmall, &cfg) == QDS_OK);
    qds_truth* truth = nullptr;
    REQUIRE(qds_truth_simulate(cfg, &truth) == QDS_OK);
    int rows = 0, cols = 0;
    CHECK(qds_truth_shape(truth, &rows, &cols) == QDS_OK);
    CHECK(rows == 32);
    CHECK(cols == 32);

    const std::string dir = temp_dir("run");
    REQUIRE(qds_truth_save(truth, dir.c_str()) == QDS_OK);
    qds_run* active = nullptr;
    REQUIRE(qds_run_execute(cfg, truth, dir.c_str(), &active) == QDS_OK);
    qds_run_info info{};
    REQUIRE(qds_run_get_info(active, &info) == QDS_OK);
    CHECK(info.measured == 1024);
    CHECK(info.complete == 1);
    CHECK(std::strcmp(info.mode, "batch") == 0);

    size_t length = 0;
    REQUIRE(qds_run_curve(active, truth, nullptr, 0, &length) == QDS_OK);
    CHECK(length == 1025);
    std::vector<double> curve(length);
    REQUIRE(qds_run_curve(active, truth, curve.data(), curve.size(), &length) == QDS_OK);
    CHECK(curve.front() == 1.0);
    CHECK(std::abs(curve.back()) < 1e-12);

    // The saved map reproduces the fingerprint.
    qds_truth* replay = nullptr;
    REQUIRE(qds_truth_load((dir + "/ground_truth.csv").c_str(), &replay) == QDS_OK);
    CHECK(std::strcmp(qds_truth_fingerprint(replay), qds_truth_fingerprint(truth)) == 0);

    qds_run* loaded = nullptr;
    REQUIRE(qds_run_load((dir + "/events.jsonl").c_str(), &loaded) == QDS_OK);
    qds_run_info linfo{};
    REQUIRE(qds_run_get_info(loaded, &linfo) == QDS_OK);
    CHECK(linfo.measured == info.measured);

    REQUIRE(qds_config_set_mode(cfg, "gridscan") == QDS_OK);
    qds_run* grid = nullptr;
    REQUIRE(qds_run_execute(cfg, truth, nullptr, &grid) == QDS_OK);

    const qds_run* runs[] = {grid, loaded};
    const char* labels[] = {"grid", "active"};
    qds_report* report = nullptr;
    REQUIRE(qds_compare(runs, labels, 2, truth, &report) == QDS_OK);
    CHECK(qds_report_size(report) == 2);
    qds_run_summary s{};
    REQUIRE(qds_report_summary(report, 1, &s) == QDS_OK);
    CHECK(std::strcmp(s.label, "active") == 0);
    CHECK(s.speedup > 0.0);
    CHECK(qds_report_summary(report, 2, &s) == QDS_ERR_ARGUMENT);
    CHECK(qds_report_write(report, temp_dir("report").c_str()) == QDS_OK);
    qds_report_free(report);

    // A different device gives a different fingerprint.
    REQUIRE(qds_config_set_device_seed(cfg, 2) == QDS_OK);
    qds_truth* other = nullptr;
    REQUIRE(qds_truth_simulate(cfg, &other) == QDS_OK);
    CHECK(qds_run_curve(active, other, nullptr, 0, &length) == QDS_ERR_DOMAIN);
    CHECK(qds_compare(runs, nullptr, 2, other, &report) == QDS_ERR_DOMAIN);

    qds_truth_free(other);
    qds_run_free(grid);
    qds_run_free(loaded);
    qds_run_free(active);
    qds_truth_free(replay);
    qds_truth_free(truth);
    qds_config_free(cfg);
  }

  TEST_CASE("freeing null handles is a no-op") {
    qds_config_free(nullptr);
    qds_truth_free(nullptr);
    qds_run_free(nullptr);
    qds_report_free(nullptr);
    qds_string_free(nullptr);
  }
}
