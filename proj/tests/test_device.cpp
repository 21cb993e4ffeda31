#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <queue>
#include <random>

#include "oracles.hpp"
#include "qdscan/device.hpp"
#include "qdscan/io.hpp"

using namespace qdscan;

namespace {

DeviceParams random_params(std::mt19937_64& rng, bool slope = true) {
  DeviceSampling s;
  s.level_jitter = 0.3;
  if (!slope) s.cap_scale_slope = {0.0, 0.0};
  return sample_device_params(rng, s);
}

GateVoltages random_voltages(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  return {u(rng), u(rng), u(rng)};
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "qdscan_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Components of label-1 pixels (4-connected) over rows [r0, r1).
int count_components(const Grid<std::uint8_t>& l, int r0, int r1) {
  Grid<std::uint8_t> seen(l.rows(), l.cols(), 0);
  int count = 0;
  for (int r = r0; r < r1; ++r)
    for (int c = 0; c < l.cols(); ++c) {
      if (!l(r, c) || seen(r, c)) continue;
      ++count;
      std::queue<Pixel> q;
      q.push({r, c});
      seen(r, c) = 1;
      while (!q.empty()) {
        const Pixel p = q.front();
        q.pop();
        const Pixel next[4] = {{p.row + 1, p.col}, {p.row - 1, p.col}, {p.row, p.col + 1}, {p.row, p.col - 1}};
        for (Pixel n : next)
          if (n.row >= r0 && n.row < r1 && l.contains(n) && l[n] && !seen[n]) {
            seen[n] = 1;
            q.push(n);
          }
      }
    }
  return count;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_SUITE("device") {
  TEST_CASE("total energy of an empty dot with no fields is zero") {
    DeviceParams p;
    CHECK(total_energy(p, 0, {}) == 0.0);
  }

  TEST_CASE("single electron energy reduces to 1/(2C) + E1") {
    DeviceParams p;
    p.c_source = 0.4;
    p.c_drain = 0.3;
    p.c_gate = 0.3;
    p.level_energies = {0.5};
    CHECK(total_energy(p, 1, {}) == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("energy differences equal the closed-form potential") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const DeviceParams p = random_params(rng);
      const GateVoltages v = random_voltages(rng);
      for (int n = 1; n <= 20; ++n) {
        const double lhs = total_energy(p, n, v, n) - total_energy(p, n - 1, v, n);
        const double rhs = electrochemical_potential(p, n, v);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
      }
    }
  }

  TEST_CASE("offset of one half cancels the first potential") {
    DeviceParams p;
    p.n_offset = 0.5;
    p.level_energies = {0.0};
    CHECK(electrochemical_potential(p, 1, {}) == doctest::Approx(0.0).epsilon(1e-15));
  }

  TEST_CASE("addition energy is 1/C plus the level spacing") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const DeviceParams p = random_params(rng, false);
      const GateVoltages v = random_voltages(rng);
      for (int n = 1; n < 20; ++n) {
        const double gap = electrochemical_potential(p, n + 1, v) - electrochemical_potential(p, n, v);
        const double expect = 1.0 / p.c_total() + p.level_energy(n + 1) - p.level_energy(n);
        CHECK(gap == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("constant addition energy without levels or scaling") {
    DeviceParams p;
    p.c_source = 0.7;
    p.c_drain = 0.9;
    p.c_gate = 0.4;
    for (int n = 1; n < 30; ++n) {
      const double gap = electrochemical_potential(p, n + 1, {0.1, 0.0, 1.3}) -
                         electrochemical_potential(p, n, {0.1, 0.0, 1.3});
      CHECK(gap == doctest::Approx(1.0 / 2.0).epsilon(1e-12));
    }
  }

  TEST_CASE("invalid electron numbers are domain errors") {
    DeviceParams p;
    CHECK_THROWS_AS(total_energy(p, -1, {}), DomainError);
    CHECK_THROWS_AS(electrochemical_potential(p, 0, {}), DomainError);
  }

  TEST_CASE("zero bias leaves almost every pixel without current") {
    std::mt19937_64 rng(13);
    const DeviceParams p = random_params(rng);
    const VoltageWindow w{{0.0, 5.0}, {-1e-9, 1e-9}, 64, 64};
    const CurrentMap map = simulate_current_map(p, w);
    std::size_t zeros = 0;
    for (double v : map.values.flat()) zeros += v == 0.0;
    CHECK(zeros >= 0.95 * map.values.size());
  }

  TEST_CASE("current map matches the level-counting oracle") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
      DeviceSampling s;
      s.level_jitter = 0.2;
      s.transition_probability = 0.7;
      const DeviceParams p = sample_device_params(rng, s);
      const VoltageWindow w{{0.0, 5.0}, {-0.4, 0.4}, 16, 16};
      const CurrentMap map = simulate_current_map(p, w);
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
          CHECK(map.values(r, c) == oracle::current(p, w.axis2_at(r), w.axis1_at(c)));
    }
  }

  TEST_CASE("diamond edge slopes match the capacitance ratios") {
    DeviceParams p;
    p.c_source = 1.0;
    p.c_drain = 1.0;
    p.c_gate = 0.5;
    p.n_offset = 0.25;
    const double c = p.c_total();
    const VoltageWindow w{{0.0, 6.0}, {0.0, 0.6}, 512, 512};
    const auto seg = simulate_segmentation_map(p, w);
    // Height of the blockaded column above zero bias.
    std::vector<int> h(512, 0);
    for (int col = 0; col < 512; ++col) {
      int r = 1;
      while (r < 512 && seg.labels(r, col)) ++r;
      h[col] = r - 1;
    }
    // A complete diamond: between two columns where the height collapses.
    std::vector<int> feet;
    for (int col = 1; col < 511; ++col)
      if (h[col] <= 2 && h[col] <= h[col - 1] && h[col] <= h[col + 1]) feet.push_back(col);
    REQUIRE(feet.size() >= 2);
    const int a = feet[0], b = feet[1];
    const int apex = static_cast<int>(std::max_element(h.begin() + a, h.begin() + b) - h.begin());
    std::vector<double> lx, ly, rx, ry;
    for (int col = a; col < b; ++col) {
      const double frac_left = double(col - a) / (apex - a);
      const double frac_right = double(b - col) / (b - apex);
      if (col < apex && frac_left > 0.2 && frac_left < 0.8) {
        lx.push_back(w.axis1_at(col));
        ly.push_back(w.axis2_at(h[col]));
      } else if (col > apex && frac_right > 0.2 && frac_right < 0.8) {
        rx.push_back(w.axis1_at(col));
        ry.push_back(w.axis2_at(h[col]));
      }
    }
    REQUIRE(lx.size() > 10);
    REQUIRE(rx.size() > 10);
    CHECK(fit_slope(lx, ly) == doctest::Approx(p.c_gate / (c - p.c_source)).epsilon(0.03));
    CHECK(fit_slope(rx, ry) == doctest::Approx(-p.c_gate / p.c_source).epsilon(0.03));
  }

  TEST_CASE("huge charging energy blockades the whole window") {
    DeviceParams p;
    p.c_source = p.c_drain = p.c_gate = 1e-3;
    const auto seg = simulate_segmentation_map(p, {{0.0, 5.0}, {-0.4, 0.4}, 32, 32});
    for (auto v : seg.labels.flat()) CHECK(v == 1);
  }

  TEST_CASE("segmentation matches the blockade oracle and implies zero current") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 100; ++trial) {
      DeviceSampling s;
      s.transition_probability = 0.5;
      s.level_jitter = 0.3;
      const DeviceParams p = sample_device_params(rng, s);
      const VoltageWindow w{{0.0, 5.0}, {-0.4, 0.4}, 16, 16};
      const auto seg = simulate_segmentation_map(p, w);
      const auto map = simulate_current_map(p, w);
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
          const bool oracle_in = oracle::blockaded(p, w.axis2_at(r), w.axis1_at(c));
          CHECK((seg.labels(r, c) == 1) == oracle_in);
          if (seg.labels(r, c)) CHECK(map.values(r, c) == 0.0);
        }
    }
  }

  TEST_CASE("windows with three or more transitions hold separate diamonds") {
    std::mt19937_64 rng(16);
    const VoltageWindow w{{0.0, 5.0}, {-0.4, 0.4}, 128, 128};
    int tested = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const DeviceParams p = sample_device_params(rng, DeviceSampling{});
      // Degeneracy points on the zero-bias line inside the gate range.
      int transitions = 0;
      for (int n = 1; n < 400; ++n) {
        const double mu_low = electrochemical_potential(p, n, {0.0, 0.0, w.axis1.min});
        const double mu_high = electrochemical_potential(p, n, {0.0, 0.0, w.axis1.max});
        if (mu_high > 0.0) break;  // potentials only grow with n
        if (mu_low > 0.0) ++transitions;
      }
      if (transitions < 3) continue;
      ++tested;
      const auto seg = simulate_segmentation_map(p, w);
      // Upper half away from zero bias, where neighbouring diamonds separate.
      CHECK(count_components(seg.labels, 66, 128) >= 2);
    }
    CHECK(tested >= 10);
  }

  TEST_CASE("degenerate sampling ranges give fixed parameters") {
    DeviceSampling s;
    s.c_source = {1.0, 1.0};
    s.c_drain = {0.8, 0.8};
    s.c_gate = {0.4, 0.4};
    s.n_offset = {0.3, 0.3};
    s.level_spacing = {0.05, 0.05};
    s.cap_scale_slope = {0.01, 0.01};
    s.excited_offset = {0.1, 0.1};
    std::mt19937_64 a(1), b(2);
    auto pa = sample_device_params(a, s), pb = sample_device_params(b, s);
    pa.rng_seed = pb.rng_seed = 0;
    CHECK(pa == pb);
  }

  TEST_CASE("sampled parameters stay inside their ranges") {
    DeviceSampling s;
    std::mt19937_64 rng(17);
    for (int i = 0; i < 10000; ++i) {
      const auto p = sample_device_params(rng, s);
      CHECK(p.c_source >= s.c_source.min);
      CHECK(p.c_source <= s.c_source.max);
      CHECK(p.c_drain >= s.c_drain.min);
      CHECK(p.c_drain <= s.c_drain.max);
      CHECK(p.c_gate >= s.c_gate.min);
      CHECK(p.c_gate <= s.c_gate.max);
      CHECK(p.n_offset >= s.n_offset.min);
      CHECK(p.n_offset <= s.n_offset.max);
      CHECK(p.cap_scale_slope >= s.cap_scale_slope.min);
      CHECK(p.cap_scale_slope <= s.cap_scale_slope.max);
    }
  }

  TEST_CASE("seeds determine parameters and maps") {
    std::mt19937_64 a(5), b(5), c(6);
    const auto pa = sample_device_params(a, {}), pb = sample_device_params(b, {});
    const auto pc = sample_device_params(c, {});
    CHECK(pa == pb);
    CHECK_FALSE(pa == pc);
    const VoltageWindow w{{0.0, 5.0}, {-0.4, 0.4}, 64, 64};
    CHECK(simulate_current_map(pa, w).values == simulate_current_map(pb, w).values);
  }

  TEST_CASE("invalid sampling ranges are config errors") {
    DeviceSampling s;
    s.c_gate = {0.7, 0.3};
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(sample_device_params(rng, s), ConfigError);
    s = {};
    s.c_source = {0.0, 1.0};
    CHECK_THROWS_AS(sample_device_params(rng, s), ConfigError);
  }

  TEST_CASE("noise profiles") {
    std::mt19937_64 rng(18);
    SUBCASE("zero sigma is silent") {
      const auto p = synthesize_noise_profile({NoiseKind::gaussian_white, 0.0}, 16, 16, rng);
      for (double v : p.values.flat()) CHECK(v == 0.0);
    }
    SUBCASE("white noise variance") {
      const auto p = synthesize_noise_profile({NoiseKind::gaussian_white, 1.0}, 128, 128, rng);
      double s = 0, ss = 0;
      for (double v : p.values.flat()) {
        s += v;
        ss += v * v;
      }
      const double n = static_cast<double>(p.values.size());
      CHECK(std::abs(s / n) <= 3.0 / std::sqrt(n));
      CHECK(ss / n >= 0.95);
      CHECK(ss / n <= 1.05);
    }
    SUBCASE("telegraph noise has two levels") {
      const auto p = synthesize_noise_profile({NoiseKind::telegraph, 1.0, 0.05}, 32, 32, rng);
      std::set<double> levels(p.values.flat().begin(), p.values.flat().end());
      CHECK(levels.size() == 2);
    }
    SUBCASE("correlated kinds are zero mean") {
      for (auto kind : {NoiseKind::pink_1_over_f, NoiseKind::telegraph}) {
        const auto p = synthesize_noise_profile({kind, 1.0, 0.05}, 64, 64, rng);
        double s = 0;
        for (double v : p.values.flat()) s += v;
        CHECK(std::abs(s / p.values.size()) < 1e-12);
      }
    }
    SUBCASE("unknown kind") { CHECK_THROWS_AS(parse_noise_kind("brown"), ConfigError); }
    SUBCASE("ten standard profiles") {
      const auto profiles = standard_noise_profiles(32, 32, 3);
      REQUIRE(profiles.size() == 10);
      for (int j = 0; j < 10; ++j) {
        CHECK(profiles[j].profile_index == j + 1);
        CHECK(profiles[j].power() > 0.0);
      }
    }
  }

  TEST_CASE("rescaling makes the initial grid peak one") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = sample_device_params(rng, {});
      CurrentMap map = simulate_current_map(p, {{0.0, 5.0}, {-0.4, 0.4}, 64, 64});
      const auto grid = uniform_grid(64, 64, 8, 8);
      rescale_to_grid(map, grid);
      double peak = 0.0;
      for (Pixel x : grid) peak = std::max(peak, std::abs(map.values[x]));
      CHECK(peak == 1.0);
    }
  }

  TEST_CASE("recorded map round trip is bit identical") {
    std::mt19937_64 rng(20);
    const auto p = sample_device_params(rng, {});
    CurrentMap map = simulate_current_map(p, {{0.0, 5.0}, {-0.4, 0.4}, 32, 32});
    add_measurement_noise(map, 100.0, rng);
    const auto path = temp_file("roundtrip.csv");
    save_map_csv(path, map);
    const CurrentMap back = load_recorded_map(path);
    CHECK(back.values == map.values);
    CHECK(back.window == map.window);
  }

  TEST_CASE("recorded map layout and errors") {
    const auto path = temp_file("small.csv");
    {
      std::ofstream out(path);
      out << "# axis1 0 1\n# axis2 -1 1\n0,1\n2,3\n";
    }
    const CurrentMap m = load_recorded_map(path);
    CHECK(m.values(0, 0) == 0.0);
    CHECK(m.values(0, 1) == 1.0);
    CHECK(m.values(1, 0) == 2.0);
    CHECK(m.values(1, 1) == 3.0);
    {
      std::ofstream out(path);
      out << "# axis1 0 1\n# axis2 -1 1\n0,1\n2,nan\n";
    }
    try {
      load_recorded_map(path);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      const std::string what = e.what();
      CHECK(what.find("row 1") != std::string::npos);
      CHECK(what.find("col 1") != std::string::npos);
    }
    {
      std::ofstream out(path);
      out << "# axis1 0 1\n# axis2 -1 1\n0,1\n2\n";
    }
    CHECK_THROWS_AS(load_recorded_map(path), ParseError);
  }

  TEST_CASE("device parameters survive JSON") {
    std::mt19937_64 rng(21);
    const auto p = sample_device_params(rng, {});
    CHECK(device_params_from_json(device_params_to_json(p)) == p);
  }
}
