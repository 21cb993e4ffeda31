#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "qdscan/metrics.hpp"

using namespace qdscan;

namespace {

Grid<double> random_grid(std::mt19937_64& rng, int rows, int cols) {
  Grid<double> g(rows, cols);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : g.flat()) v = u(rng);
  return g;
}

std::vector<Pixel> random_subset(std::mt19937_64& rng, int rows, int cols, std::size_t n) {
  std::vector<Pixel> all;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) all.push_back({r, c});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(n);
  return all;
}

ReconstructionEnsemble ensemble_of(std::vector<Grid<double>> grids, std::vector<double> weights) {
  ReconstructionEnsemble e;
  for (auto& g : grids) {
    const int rows = g.rows(), cols = g.cols();
    e.members.push_back({{{0, 1}, {0, 1}, rows, cols}, std::move(g), 1.0});
  }
  e.weights = std::move(weights);
  return e;
}

// N = 2^14 and delta = 2^7 keep every slope below exactly representable.
StoppingState unlimited() {
  StoppingState s;
  s.spent = 1024;
  s.total_budget = 16384;
  s.batch = 128;
  s.pixels_per_map = 16384;
  return s;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("gradient of constant and ramp maps") {
    CHECK(gradient_norm_map(Grid<double>(6, 6, 3.0)).values == Grid<double>(6, 6, 0.0));
    Grid<double> ramp(6, 7);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 7; ++c) ramp(r, c) = c;
    const auto g = gradient_norm_map(ramp);
    for (double v : g.values.flat()) CHECK(v == 1.0);
  }

  TEST_CASE("gradient matches the stencil oracle") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
      const auto y = random_grid(rng, 8, 8);
      const auto g = gradient_norm_map(y);
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) CHECK(std::abs(g.values(r, c) - oracle::gradient_at(y, r, c)) <= 1e-12);
    }
  }

  TEST_CASE("Sobel edges match the oracle") {
    std::mt19937_64 rng(2);
    std::bernoulli_distribution bit(0.4);
    for (int t = 0; t < 30; ++t) {
      SegmentationMap seg{{{0, 1}, {0, 1}, 16, 16}, Grid<std::uint8_t>(16, 16)};
      for (auto& v : seg.labels.flat()) v = bit(rng);
      const auto e = sobel_edge_map(seg);
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) CHECK(e.values(r, c) == doctest::Approx(oracle::sobel_at(seg.labels, r, c)));
    }
  }

  TEST_CASE("error r examples") {
    std::mt19937_64 rng(3);
    const auto g = gradient_norm_map(random_grid(rng, 4, 4));
    CHECK(error_r(std::vector<Pixel>{}, g) == 1.0);
    CHECK(error_r(random_subset(rng, 4, 4, 16), g) == 0.0);
    GradientMap known{Grid<double>(4, 4)};
    for (int i = 0; i < 16; ++i) known.values.flat()[i] = i + 1;  // total 136
    const std::vector<Pixel> three{{0, 0}, {1, 2}, {3, 3}};
    CHECK(error_r(three, known) == doctest::Approx(1.0 - (1 + 7 + 16) / 136.0).epsilon(1e-15));
    CHECK_THROWS_AS(error_r(three, GradientMap{Grid<double>(4, 4, 0.0)}), DomainError);
  }

  TEST_CASE("error r never grows as pixels are added") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
      const auto g = gradient_norm_map(random_grid(rng, 8, 8));
      const auto seq = random_subset(rng, 8, 8, 64);
      const auto curve = error_curve(seq, g);
      CHECK(curve.front() == 1.0);
      CHECK(curve.size() == 65);
      for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1]);
      for (std::size_t i = 0; i <= 64; i += 7)
        CHECK(curve[i] == doctest::Approx(error_r(std::span(seq).first(i), g)).epsilon(1e-12));
    }
  }

  TEST_CASE("optimal bound") {
    std::mt19937_64 rng(5);
    SUBCASE("complete map") {
      const auto g = gradient_norm_map(random_grid(rng, 8, 8));
      CHECK(optimal_r(g, 64) == 0.0);
      CHECK(optimal_curve(g).back() == 0.0);
    }
    SUBCASE("flat gradient is the grid-scan line") {
      const GradientMap g{Grid<double>(8, 8, 0.5)};
      for (std::size_t n = 0; n <= 64; ++n) CHECK(optimal_r(g, n) == doctest::Approx(1.0 - n / 64.0).epsilon(1e-14));
    }
    SUBCASE("no measurement set beats it") {
      const auto g = gradient_norm_map(random_grid(rng, 8, 8));
      const auto curve = optimal_curve(g);
      for (int t = 0; t < 1000; ++t) {
        const std::size_t n = t % 65;
        const double r = error_r(random_subset(rng, 8, 8, n), g);
        CHECK(optimal_r(g, n) <= r + 1e-12);
        CHECK(curve[n] == doctest::Approx(optimal_r(g, n)).epsilon(1e-12));
      }
    }
    SUBCASE("n past the end") {
      const GradientMap g{Grid<double>(2, 2, 1.0)};
      CHECK_THROWS_AS(optimal_r(g, 5), DomainError);
    }
  }

  TEST_CASE("weighted percentiles match the sorting oracle") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 50; ++t) {
      const std::size_t m = 1 + t;
      std::vector<double> v(m);
      for (double& x : v) x = u(rng);
      const auto w = oracle::random_simplex(rng, m, true);
      for (double q : {0.05, 0.5, 0.95})
        CHECK(weighted_percentile(v, w, q) == oracle::percentile(v, w, q));
    }
  }

  TEST_CASE("ensemble estimates of r") {
    std::mt19937_64 rng(7);
    const auto measured = random_subset(rng, 8, 8, 20);
    SUBCASE("identical members give a zero-width interval") {
      const auto y = random_grid(rng, 8, 8);
      const auto est = estimate_r(measured, ensemble_of({y, y, y}, {0.2, 0.3, 0.5}));
      const double r = error_r(measured, gradient_norm_map(y));
      CHECK(est.lo90 == r);
      CHECK(est.hi90 == r);
      CHECK(est.mean == doctest::Approx(r).epsilon(1e-14));
    }
    SUBCASE("a certain true member gives the true r") {
      const auto truth = random_grid(rng, 8, 8);
      const auto est = estimate_r(measured, ensemble_of({random_grid(rng, 8, 8), truth}, {0.0, 1.0}));
      const double r = error_r(measured, gradient_norm_map(truth));
      CHECK(est.mean == r);
      CHECK(est.lo90 == r);
      CHECK(est.hi90 == r);
    }
    SUBCASE("interval ends match the oracle") {
      for (int t = 0; t < 50; ++t) {
        std::vector<Grid<double>> grids;
        const std::size_t m = 2 + t % 9;
        for (std::size_t k = 0; k < m; ++k) grids.push_back(random_grid(rng, 8, 8));
        const auto w = oracle::random_simplex(rng, m);
        std::vector<double> r;
        for (const auto& g : grids) r.push_back(error_r(measured, gradient_norm_map(g)));
        const auto est = estimate_r(measured, ensemble_of(grids, w));
        CHECK(est.lo90 == oracle::percentile(r, w, 0.05));
        CHECK(est.hi90 == oracle::percentile(r, w, 0.95));
        double mean = 0;
        for (std::size_t k = 0; k < m; ++k) mean += w[k] * r[k];
        CHECK(est.mean == doctest::Approx(mean).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("lazy augmented estimates match materialised variants") {
    std::mt19937_64 rng(8);
    std::vector<Grid<double>> grids;
    for (int k = 0; k < 4; ++k) grids.push_back(random_grid(rng, 16, 16));
    auto e = ensemble_of(grids, oracle::random_simplex(rng, 4));
    const auto profiles = standard_noise_profiles(16, 16, 9);
    const std::vector<double> snr{400, 1600, 6400};
    Grid<std::uint8_t> mask(16, 16, 0);
    for (Pixel p : random_subset(rng, 16, 16, 50)) mask[p] = 1;
    const std::vector<Pixel> next{{0, 0}, {5, 5}, {9, 3}};
    for (Pixel p : next) mask[p] = 0;
    const auto est = augmented_member_estimates(e, profiles, snr, mask, next, 2);
    const auto aug = augment_noisy(e, profiles, snr);
    REQUIRE(est.r_now.size() == aug.size());
    Grid<std::uint8_t> after = mask;
    for (Pixel p : next) after[p] = 1;
    for (std::size_t k = 0; k < aug.size(); ++k) {
      const auto g = gradient_norm_map(aug.members[k]);
      CHECK(est.r_now[k] == doctest::Approx(error_r(mask, g)).epsilon(1e-12));
      CHECK(est.r_next[k] == doctest::Approx(error_r(after, g)).epsilon(1e-12));
      CHECK(est.weights[k] == aug.weights[k]);
    }
  }

  TEST_CASE("stopping rule examples") {
    const StoppingState s = unlimited();
    const double alpha = s.alpha();
    const double d = alpha * s.batch;  // r drop at exactly the grid-scan slope
    SUBCASE("flat estimates stop") {
      const std::vector<double> r{0.4, 0.3, 0.2};
      const auto dec = stopping_decide(s, r, r);
      CHECK(dec.stop);
      CHECK(dec.beta == 0.0);
      CHECK(dec.threshold == alpha);
    }
    SUBCASE("grid-scan slope continues") {
      const std::vector<double> now{0.5, 0.25}, next{0.5 - d, 0.25 - d};
      const auto dec = stopping_decide(s, now, next);
      CHECK(dec.beta == alpha);
      CHECK_FALSE(dec.stop);
    }
    SUBCASE("saturated budget cap never stops") {
      StoppingState f = s;
      f.remaining_maps = 2.0;
      f.total_budget = f.spent + 4.0 * 16384;  // T - t and T - t - delta both exceed N K
      const std::vector<double> r{0.4, 0.3};
      const auto dec = stopping_decide(f, r, r);
      CHECK(dec.threshold == 0.0);
      CHECK_FALSE(dec.stop);
    }
    SUBCASE("two members, worst case half the grid-scan slope") {
      const std::vector<double> now{0.5, 0.5}, next{0.5 - 0.5 * d, 0.5 - 2 * d};
      const auto dec = stopping_decide(s, now, next);
      CHECK(dec.beta == 0.5 * alpha);
      CHECK(dec.stop);
    }
    SUBCASE("zero batch is an error") {
      StoppingState z = s;
      z.batch = 0;
      const std::vector<double> r{0.5};
      CHECK_THROWS_AS(stopping_decide(z, r, r), DomainError);
    }
  }

  TEST_CASE("budget threshold never exceeds alpha") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 1000; ++t) {
      StoppingState s = unlimited();
      s.total_budget = 1000 + 100000 * u(rng);
      s.spent = s.total_budget * u(rng);
      s.batch = 1 + std::floor(4000 * u(rng));
      s.remaining_maps = std::floor(10 * u(rng));
      const std::vector<double> r{0.5};
      const auto dec = stopping_decide(s, r, r);
      CHECK(dec.threshold <= s.alpha() * (1 + 1e-12));
      CHECK(dec.threshold >= 0.0);
      const double left = s.total_budget - s.spent;
      const double cap = s.pixels_per_map * *s.remaining_maps;
      if (left <= cap) CHECK(dec.threshold == doctest::Approx(s.alpha()).epsilon(1e-12));
    }
  }

  TEST_CASE("never stops while every member beats the grid-scan slope") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0, 1);
    const StoppingState s = unlimited();
    for (int t = 0; t < 200; ++t) {
      std::vector<double> now(30), next(30), w = oracle::random_simplex(rng, 30);
      for (std::size_t m = 0; m < 30; ++m) {
        now[m] = 0.5 + 0.5 * u(rng);
        next[m] = now[m] - s.alpha() * s.batch * (1.0 + 1e-6 + 3 * u(rng));
      }
      CHECK_FALSE(stopping_decide(s, now, next).stop);
      CHECK_FALSE(stopping_decide(s, now, next, w, BetaStatistic::weighted_mean).stop);
    }
  }

  TEST_CASE("posterior-mean slope") {
    const StoppingState s = unlimited();
    const double d = s.alpha() * s.batch;
    const std::vector<double> now{0.5, 0.5}, next{0.5 - 0.5 * d, 0.5 - 2 * d};
    const std::vector<double> w{0.5, 0.5};
    const auto dec = stopping_decide(s, now, next, w, BetaStatistic::weighted_mean);
    CHECK(dec.beta == doctest::Approx(1.25 * s.alpha()).epsilon(1e-14));
    CHECK_FALSE(dec.stop);
    const std::vector<double> heavy{0.9, 0.1};
    CHECK(stopping_decide(s, now, next, heavy, BetaStatistic::weighted_mean).stop);
    CHECK_THROWS_AS(stopping_decide(s, now, next, {}, BetaStatistic::weighted_mean), DomainError);
    CHECK(parse_beta_statistic("min") == BetaStatistic::minimum);
    CHECK_THROWS_AS(parse_beta_statistic("max"), ConfigError);
  }
}
