#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "umfi/error.hpp"
#include "umfi/evaluator.hpp"
#include "umfi/stats.hpp"

using namespace umfi;

namespace {

// Leave-one-out 1-nearest-neighbour R^2: an independent, model-free measure of how
// learnable y is from the given columns.
double one_nn_r2(const Matrix& x, const std::vector<double>& y) {
  const std::size_t n = x.rows();
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      double d = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) d += (x(i, j) - x(k, j)) * (x(i, j) - x(k, j));
      if (d < best) {
        best = d;
        arg = k;
      }
    }
    sse += (y[i] - y[arg]) * (y[i] - y[arg]);
  }
  const double m = stats::mean(y);
  double sst = 0.0;
  for (double v : y) sst += (v - m) * (v - m);
  return 1.0 - sse / sst;
}

ForestConfig small_forest(std::size_t trees = 50) {
  ForestConfig cfg;
  cfg.n_trees = trees;
  return cfg;
}

}  // namespace

TEST_CASE("default mtry and node size follow the task") {
  ForestConfig cfg;
  CHECK(cfg.resolved_mtry(TaskKind::kClassification, 10) == 4);
  CHECK(cfg.resolved_mtry(TaskKind::kClassification, 16) == 4);
  CHECK(cfg.resolved_mtry(TaskKind::kRegression, 10) == 4);
  CHECK(cfg.resolved_mtry(TaskKind::kRegression, 2) == 1);
  CHECK(cfg.resolved_min_node_size(TaskKind::kClassification) == 1);
  CHECK(cfg.resolved_min_node_size(TaskKind::kRegression) == 5);
}

TEST_CASE("forest skill ranks feature subsets like a nearest-neighbour oracle") {
  const Dataset d = testing::regression_data(300, 3, 17, [](const Matrix& x, std::size_t i, Rng& rng) {
    return std::sin(2.0 * x(i, 0)) + 0.5 * x(i, 1) + 0.1 * rng.normal();
  });
  const EvaluationFunction e(small_forest(), SeedSpec(1));
  const std::vector<FeatureSubset> subsets{FeatureSubset({0}), FeatureSubset({1}), FeatureSubset({2}),
                                           FeatureSubset({0, 1})};
  std::vector<double> forest, oracle;
  for (const auto& s : subsets) {
    forest.push_back(e.nu(subset_matrix(d, s), d.response()));
    oracle.push_back(one_nn_r2(subset_matrix(d, s), d.response().values));
  }
  // Oracle order: {x1,x2} > {x1} > {x2} > {x3}.
  REQUIRE(oracle[3] > oracle[0]);
  REQUIRE(oracle[0] > oracle[1]);
  REQUIRE(oracle[1] > oracle[2]);
  CHECK(forest[3] > forest[0]);
  CHECK(forest[0] > forest[1]);
  CHECK(forest[1] > forest[2]);
  CHECK(forest[3] > 0.8);
  CHECK(forest[2] < 0.05);
}

TEST_CASE("classification accuracy is high on a separable problem") {
  Rng rng{SeedSpec(4)};
  Matrix x = testing::gaussian_matrix(200, 2, rng);
  std::vector<double> y(200);
  for (std::size_t i = 0; i < 200; ++i) y[i] = x(i, 0) + x(i, 1) > 0 ? 1.0 : 0.0;
  const Response r = Response::classification(y);
  const Forest f = fit_forest(x, r, small_forest(), SeedSpec(3));
  CHECK(oob_score(f, x, r) > 0.85);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 200; ++i) correct += f.predict(x, i) == y[i] ? 1 : 0;
  CHECK(correct >= 190);
}

TEST_CASE("a tree with a huge minimum node size is a single leaf at the mean") {
  const Dataset d = testing::regression_data(50, 2, 5, [](const Matrix& x, std::size_t i, Rng&) { return x(i, 0); });
  ForestConfig cfg = small_forest(1);
  cfg.min_node_size = 1000;
  const Forest f = fit_forest(d.features(), d.response(), cfg, SeedSpec(1));
  REQUIRE(f.trees[0].num_nodes() == 1);
  CHECK(f.trees[0].depth() == 0);
  // The leaf holds the in-bag mean, so it lies within the response range.
  const auto [lo, hi] = std::minmax_element(d.response().values.begin(), d.response().values.end());
  CHECK(f.trees[0].leaf_value[0] >= *lo);
  CHECK(f.trees[0].leaf_value[0] <= *hi);
}

TEST_CASE("out-of-bag rows are roughly a third of the sample") {
  const Dataset d = testing::regression_data(400, 2, 6, [](const Matrix& x, std::size_t i, Rng&) { return x(i, 1); });
  const Forest f = fit_forest(d.features(), d.response(), small_forest(20), SeedSpec(2));
  for (const auto& t : f.trees) {
    const double frac = static_cast<double>(t.oob_rows.size()) / 400.0;
    CHECK(frac == doctest::Approx(std::exp(-1.0)).epsilon(0.15));
    CHECK(std::is_sorted(t.oob_rows.begin(), t.oob_rows.end()));
  }
}

TEST_CASE("nu is deterministic, thread-count independent and column-order independent") {
  const Dataset d = testing::regression_data(150, 4, 8, [](const Matrix& x, std::size_t i, Rng& rng) {
    return x(i, 0) * x(i, 1) + x(i, 2) + 0.2 * rng.normal();
  });
  ForestConfig serial = small_forest(30);
  ForestConfig threaded = serial;
  threaded.threads = 3;
  const EvaluationFunction a(serial, SeedSpec(5));
  const EvaluationFunction b(threaded, SeedSpec(5));
  const double base = a.nu(d.features(), d.response());
  CHECK(a.nu(d.features(), d.response()) == base);
  CHECK(b.nu(d.features(), d.response()) == base);

  Rng rng{SeedSpec(9)};
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> perm(4);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = 3; k > 0; --k) std::swap(perm[k], perm[rng.index(k + 1)]);
    Matrix shuffled(d.n(), 0);
    for (auto j : perm) shuffled.append_column(d.features().column(j));
    CHECK(a.nu(shuffled, d.response()) == base);
  }
  CHECK(a.trainings() == 12);
}

TEST_CASE("a different master seed gives a different but similar score") {
  const Dataset d = testing::regression_data(200, 2, 10, [](const Matrix& x, std::size_t i, Rng& rng) {
    return x(i, 0) + 0.5 * rng.normal();
  });
  const EvaluationFunction a(small_forest(), SeedSpec(1)), b(small_forest(), SeedSpec(2));
  const double na = a.nu(d.features(), d.response()), nb = b.nu(d.features(), d.response());
  CHECK(na != nb);
  CHECK(std::abs(na - nb) < 0.1);
}

TEST_CASE("nu of the empty set is zero without fitting, and scores are clamped") {
  const Dataset d = testing::regression_data(100, 1, 11, [](const Matrix&, std::size_t, Rng& rng) { return rng.normal(); });
  const EvaluationFunction e(small_forest(), SeedSpec(1));
  CHECK(e.nu(Matrix(100, 0), d.response()) == 0.0);
  CHECK(e.trainings() == 0);
  const double raw = e.raw_score(d.features(), d.response());
  CHECK(raw < 0.0);
  CHECK(e.nu(d.features(), d.response()) == 0.0);
}

TEST_CASE("invalid forest inputs are rejected") {
  const Dataset d = testing::regression_data(20, 2, 12, [](const Matrix& x, std::size_t i, Rng&) { return x(i, 0); });
  CHECK_THROWS_AS(fit_forest(Matrix(20, 0), d.response(), ForestConfig{}, SeedSpec()), UmfiError);
  ForestConfig bad;
  bad.mtry = 3;
  CHECK_THROWS_AS(fit_forest(d.features(), d.response(), bad, SeedSpec()), UmfiError);
  ForestConfig one_tree;
  one_tree.n_trees = 1;
  // A single tree leaves about a third of the rows out of bag: not enough to score.
  const Forest f = fit_forest(d.features(), d.response(), one_tree, SeedSpec());
  try {
    oob_score(f, d.features(), d.response());
    FAIL("expected NoOobRows");
  } catch (const UmfiError& e) {
    CHECK(e.code() == ErrorCode::kNoOobRows);
  }
}
