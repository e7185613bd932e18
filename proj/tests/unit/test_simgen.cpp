#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "umfi/error.hpp"
#include "umfi/simgen.hpp"
#include "umfi/stats.hpp"

using namespace umfi;

namespace {

double sgn(double v) { return (v > 0) - (v < 0); }

SimDesign design(SimKind kind, std::size_t n = 500) {
  SimDesign d;
  d.kind = kind;
  d.n = n;
  return d;
}

}  // namespace

TEST_CASE("correlated-interaction data follows its generating formula") {
  const Dataset d = generate(design(SimKind::kCorrelatedInteraction), 0, SeedSpec(1));
  REQUIRE(d.p() == 4);
  REQUIRE(d.n() == 500);
  const auto& x = d.features();
  for (std::size_t i = 0; i < d.n(); ++i) {
    const double y = x(i, 0) + x(i, 1) + sgn(x(i, 0) * x(i, 1)) + x(i, 2) + x(i, 3);
    CHECK(d.response().values[i] == doctest::Approx(y).epsilon(1e-12));
  }
  // Each pair shares one of two unit-variance sources: correlation 1/2 within, 0 across.
  CHECK(stats::pearson(x.column(0), x.column(1)) == doctest::Approx(0.5).epsilon(0.2));
  CHECK(stats::pearson(x.column(2), x.column(3)) == doctest::Approx(0.5).epsilon(0.2));
  CHECK(std::abs(stats::pearson(x.column(0), x.column(2))) < 0.15);
}

TEST_CASE("correlation data: x3 is a noisy copy of x1 and y ignores x3, x4") {
  const Dataset d = generate(design(SimKind::kCorrelation, 2000), 3, SeedSpec(2));
  const auto& x = d.features();
  std::vector<double> diff(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) {
    diff[i] = x(i, 2) - x(i, 0);
    CHECK(d.response().values[i] == x(i, 0) + x(i, 1));
  }
  CHECK(std::sqrt(stats::variance(diff)) == doctest::Approx(0.2).epsilon(0.1));
}

TEST_CASE("xor data: the sign of y is the sign of x1 x2, magnitude exponential") {
  const Dataset d = generate(design(SimKind::kNonlinearXor, 4000), 0, SeedSpec(3));
  const auto& x = d.features();
  std::vector<double> mags;
  for (std::size_t i = 0; i < d.n(); ++i) {
    CHECK(sgn(d.response().values[i]) == sgn(x(i, 0) * x(i, 1)));
    mags.push_back(std::abs(d.response().values[i]));
  }
  // Exponential with rate 1/sqrt(2) has mean sqrt(2).
  CHECK(stats::mean(mags) == doctest::Approx(std::sqrt(2.0)).epsilon(0.05));
}

TEST_CASE("generation is reproducible per replication and distinct across them") {
  const auto s = design(SimKind::kCorrelation, 60);
  CHECK(generate(s, 4, SeedSpec(9)) == generate(s, 4, SeedSpec(9)));
  CHECK_FALSE(generate(s, 4, SeedSpec(9)) == generate(s, 5, SeedSpec(9)));
  CHECK_FALSE(generate(s, 4, SeedSpec(9)) == generate(s, 4, SeedSpec(10)));
  SimDesign bad = s;
  bad.n = 10;
  CHECK_THROWS_AS(generate(bad, 0, SeedSpec()), UmfiError);
}

TEST_CASE("box_stats matches hand-computed quartiles and Tukey fences") {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 100};
  const auto b = box_stats(v);
  // Type-7: q1 at h = 2 -> 3, median 5, q3 at h = 6 -> 7; fences -3 and 13.
  CHECK(b.q1 == 3.0);
  CHECK(b.median == 5.0);
  CHECK(b.q3 == 7.0);
  CHECK(b.lower_whisker == 1.0);
  CHECK(b.upper_whisker == 8.0);
  CHECK(b.outliers == std::vector<double>{100.0});
}

TEST_CASE("box_stats invariants on random samples") {
  Rng rng{SeedSpec(4)};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + rng.index(40));
    for (auto& x : v) x = rng.normal() * (rng.uniform() < 0.1 ? 10.0 : 1.0);
    const auto b = box_stats(v);
    CHECK(b.lower_whisker <= b.q1);
    CHECK(b.q1 <= b.median);
    CHECK(b.median <= b.q3);
    CHECK(b.q3 <= b.upper_whisker);
    CHECK(b.median == stats::median(v));
    const double iqr = b.q3 - b.q1;
    for (double o : b.outliers) CHECK((o < b.q1 - 1.5 * iqr || o > b.q3 + 1.5 * iqr));
  }
}

TEST_CASE("a small study is reproducible and independent of the thread count") {
  SimDesign d = design(SimKind::kCorrelation, 100);
  d.replications = 3;
  const std::vector<Method> methods{Method::kMciExact, Method::kUmfiLr, Method::kUmfiOt};
  StudyOptions one;
  one.forest.n_trees = 20;
  StudyOptions three = one;
  three.threads = 3;
  const auto a = run_study(d, methods, one, SeedSpec(5));
  const auto b = run_study(d, methods, three, SeedSpec(5));
  CHECK(summary_to_json(a, 5) == summary_to_json(b, 5));
  CHECK(summary_points_csv(a) == summary_points_csv(b));
  CHECK(a.mci_mode == "exact");

  CHECK(a.points.size() == 3 * 3 * 4);
  const auto csv = summary_points_csv(a);
  CHECK(csv.rfind("replication,method,feature,share", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 36);

  // Shares within one replication and method sum to one (or are all zero).
  for (std::size_t r = 0; r < 3; ++r) {
    for (auto m : methods) {
      double total = 0.0;
      for (const auto& p : a.points) {
        if (p.replication == r && p.method == m) total += p.share;
      }
      CHECK((total == doctest::Approx(1.0) || total == 0.0));
    }
  }
  const auto j = nlohmann::json::parse(summary_to_json(a, 5));
  CHECK(j["seed"] == 5);
}

TEST_CASE("run_method matches a direct call on the same dataset") {
  const Dataset data = generate(design(SimKind::kNonlinearXor, 80), 0, SeedSpec(6));
  ForestConfig f;
  f.n_trees = 15;
  const auto r1 = run_method(data, Method::kUmfiOt, f, RemovalBackend{}, SeedSpec(6));
  const auto r2 = run_method(data, Method::kUmfiOt, f, RemovalBackend{}, SeedSpec(6));
  CHECK(r1.scores == r2.scores);
  CHECK(r1.trainings == 8);
}
