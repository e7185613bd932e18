#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "umfi/dependency_removal.hpp"
#include "umfi/error.hpp"
#include "umfi/stats.hpp"

using namespace umfi;

namespace {

std::vector<double> normals(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// X = Z + N(0, 1)
std::pair<std::vector<double>, std::vector<double>> dependent_pair(Rng& rng, std::size_t n) {
  auto z = normals(rng, n);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = z[i] + rng.normal();
  return {x, z};
}

// Two-sided Student-t tail by Simpson integration of the density on [0, t].
double t_two_sided_p(double t, double dof) {
  const double c = std::exp(std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2)) / std::sqrt(dof * std::numbers::pi);
  auto pdf = [&](double u) { return c * std::pow(1.0 + u * u / dof, -(dof + 1) / 2); };
  const int steps = 20000;
  const double h = t / steps;
  double s = pdf(0) + pdf(t);
  for (int k = 1; k < steps; ++k) s += pdf(k * h) * (k % 2 == 1 ? 4.0 : 2.0);
  const double half = s * h / 3.0;
  return 2.0 * (0.5 - half);
}

RemovalBackend ot(std::size_t bins = 100) { return RemovalBackend{RemovalKind::kOptimalTransport, bins, 0.01}; }
RemovalBackend lr(double alpha = 0.01) { return RemovalBackend{RemovalKind::kLinearRegression, 100, alpha}; }

}  // namespace

TEST_CASE("rank_bins partitions the sorted rows without splitting ties") {
  Rng rng{SeedSpec(1)};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.index(400);
    const std::size_t target = 2 + rng.index(60);
    const std::size_t levels = trial % 2 == 0 ? 3 + rng.index(10) : 1000000;
    std::vector<double> z(n);
    for (auto& v : z) v = static_cast<double>(rng.index(levels));
    std::sort(z.begin(), z.end());
    const auto bins = rank_bins(z, target);
    REQUIRE(!bins.empty());
    CHECK(bins.front().first == 0);
    CHECK(bins.back().second == n);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      CHECK(bins[b].first < bins[b].second);
      if (b > 0) {
        CHECK(bins[b].first == bins[b - 1].second);
        CHECK(z[bins[b].first] != z[bins[b].first - 1]);
      }
      if (n >= 2) CHECK(bins[b].second - bins[b].first >= 2);
    }
    CHECK(bins.size() <= std::max<std::size_t>(1, n / target));
  }
}

TEST_CASE("rank_bins without ties gives floor(n / target) bins of near-equal size") {
  std::vector<double> z(1055);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = static_cast<double>(i);
  const auto bins = rank_bins(z, 100);
  REQUIRE(bins.size() == 10);
  for (std::size_t b = 0; b < 10; ++b) CHECK(bins[b].second - bins[b].first == (b < 5 ? 106u : 105u));
}

TEST_CASE("OT with a constant protected feature returns X unchanged") {
  Rng rng{SeedSpec(2)};
  const auto x = normals(rng, 137);
  const std::vector<double> z(137, 4.0);
  CHECK(ot_remove(x, z, ot(20)) == x);
}

TEST_CASE("OT preserves the order of X within each bin and stays inside X's range") {
  Rng rng{SeedSpec(3)};
  for (int trial = 0; trial < 20; ++trial) {
    auto [x, z] = dependent_pair(rng, 300 + rng.index(300));
    const auto out = ot_remove(x, z, ot(50));
    const auto map = TransportMap::fit(x, z, 50);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(out[i] >= *lo);
      CHECK(out[i] <= *hi);
      for (std::size_t k = 0; k < x.size(); k += 7) {
        if (map.bin_of(z[i]) == map.bin_of(z[k]) && x[i] < x[k]) REQUIRE(out[i] <= out[k]);
      }
    }
  }
}

TEST_CASE("OT depends on Z only through its ranks") {
  Rng rng{SeedSpec(4)};
  auto [x, z] = dependent_pair(rng, 800);
  std::vector<double> ez(z.size());
  std::transform(z.begin(), z.end(), ez.begin(), [](double v) { return std::exp(v) * 3.0 - 1.0; });
  CHECK(ot_remove(x, ez, ot()) == ot_remove(x, z, ot()));
}

TEST_CASE("OT output ranks are invariant to an increasing transform of X") {
  Rng rng{SeedSpec(5)};
  auto [x, z] = dependent_pair(rng, 600);
  std::vector<double> gx(x.size());
  std::transform(x.begin(), x.end(), gx.begin(), [](double v) { return v * v * v + v; });
  CHECK(stats::mid_ranks(ot_remove(gx, z, ot())) == stats::mid_ranks(ot_remove(x, z, ot())));
}

TEST_CASE("OT removes linear dependence below a Monte-Carlo null threshold") {
  const std::size_t n = 2000;
  Rng null_rng{SeedSpec(6)};
  std::vector<double> null;
  for (int k = 0; k < 400; ++k) {
    const auto a = normals(null_rng, n), b = normals(null_rng, n);
    null.push_back(std::abs(stats::pearson(a, b)));
  }
  const double q99 = stats::quantile(null, 0.99);

  Rng rng{SeedSpec(7)};
  int below = 0;
  for (int run = 0; run < 40; ++run) {
    auto [x, z] = dependent_pair(rng, n);
    REQUIRE(std::abs(stats::pearson(x, z)) > 0.6);
    const auto out = ot_remove(x, z, ot(100));
    below += std::abs(stats::pearson(out, z)) < q99 ? 1 : 0;
    CHECK(stats::ks_statistic(x, out) < 0.1);
  }
  CHECK(below >= 36);
}

TEST_CASE("LR slope and p-value match closed-form oracles") {
  Rng rng{SeedSpec(8)};
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 10 + rng.index(200);
    const double beta = rng.normal(0, 0.3);
    auto z = normals(rng, n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = 2.0 + beta * z[i] + rng.normal();
    const auto r = lr_remove(x, z, lr());

    const double slope = stats::covariance(x, z) / stats::variance(z);
    CHECK(r.model.slope == doctest::Approx(slope).epsilon(1e-10));
    CHECK(r.model.intercept == doctest::Approx(stats::mean(x) - slope * stats::mean(z)).epsilon(1e-10));

    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = x[i] - r.model.intercept - slope * z[i];
      sse += e * e;
    }
    const double se = std::sqrt(sse / static_cast<double>(n - 2) / (stats::variance(z) * static_cast<double>(n - 1)));
    const double p = t_two_sided_p(std::abs(slope / se), static_cast<double>(n - 2));
    CHECK(r.model.slope_p_value == doctest::Approx(p).epsilon(1e-6));
    CHECK(r.model.applied == (r.model.slope_p_value < 0.01));
    if (!r.model.applied) CHECK(r.values == x);
  }
}

TEST_CASE("LR residuals are exactly orthogonal to Z and centred") {
  Rng rng{SeedSpec(9)};
  int applied = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto [x, z] = dependent_pair(rng, 50 + rng.index(500));
    const auto r = lr_remove(x, z, lr());
    REQUIRE(r.model.applied);
    ++applied;
    CHECK(std::abs(stats::covariance(r.values, z)) < 1e-9);
    CHECK(std::abs(stats::mean(r.values)) < 1e-9);
  }
  CHECK(applied == 100);
}

TEST_CASE("LR leaves X alone when Z is constant") {
  const std::vector<double> x{1, 5, 2, 8}, z{3, 3, 3, 3};
  const auto r = lr_remove(x, z, lr());
  CHECK(r.values == x);
  CHECK_FALSE(r.model.applied);
  CHECK(r.model.slope_p_value == 1.0);
}

TEST_CASE("build_s_star drops the protected column and transforms the rest") {
  Rng rng{SeedSpec(10)};
  auto [x, z] = dependent_pair(rng, 300);
  const auto w = normals(rng, 300);
  const Matrix m = Matrix::from_columns(300, {x, z, w});
  std::vector<ResidualModel> models;
  const Matrix s = build_s_star(m, 1, lr(), &models);
  REQUIRE(s.cols() == 2);
  REQUIRE(models.size() == 2);
  CHECK(models[0].applied);
  const auto direct = lr_remove(x, z, lr()).values;
  CHECK(std::equal(direct.begin(), direct.end(), s.column(0).begin()));

  const Matrix t = build_s_star(m, 1, ot());
  const auto direct_ot = ot_remove(w, z, ot());
  CHECK(std::equal(direct_ot.begin(), direct_ot.end(), t.column(1).begin()));
  CHECK_THROWS_AS(build_s_star(m, 3, ot()), UmfiError);
}

TEST_CASE("removal inputs are validated") {
  const std::vector<double> a{1, 2, 3}, b{1, 2};
  CHECK_THROWS_AS(ot_remove(a, b, ot()), UmfiError);
  CHECK_THROWS_AS(lr_remove(b, b, lr()), UmfiError);
  CHECK_THROWS_AS(ot_remove(a, a, ot(1)), UmfiError);
  CHECK_THROWS_AS(lr_remove(a, a, lr(1.5)), UmfiError);
  CHECK(parse_removal("ot") == RemovalKind::kOptimalTransport);
  CHECK(parse_removal("lr") == RemovalKind::kLinearRegression);
  CHECK_FALSE(parse_removal("pca").has_value());
}
