#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "umfi/core_data.hpp"
#include "umfi/random.hpp"

namespace umfi {

// Random-forest hyperparameters. Unset fields resolve to the usual defaults:
// mtry = ceil(sqrt(p)) for classification and ceil(p/3) for regression, min node size
// 1 for classification and 5 for regression. Trees are always grown on a bootstrap
// sample of n draws with replacement.
struct ForestConfig {
  std::size_t n_trees = 100;
  std::optional<std::size_t> mtry;
  std::optional<std::size_t> min_node_size;
  // Worker threads for growing trees; 0 = all cores. Never affects results.
  std::size_t threads = 1;

  std::size_t resolved_mtry(TaskKind task, std::size_t p) const;
  std::size_t resolved_min_node_size(TaskKind task) const;
};

struct Tree {
  // Node arrays; a node is a leaf when left_child == 0 (the root is never a child).
  std::vector<std::uint32_t> left_child;
  std::vector<std::uint32_t> right_child;
  std::vector<std::uint32_t> split_feature;
  std::vector<double> split_value;
  // Mean response (regression) or class index (classification) for leaves.
  std::vector<double> leaf_value;
  // Predictions for the rows this tree never saw, as (row, prediction) pairs.
  std::vector<std::uint32_t> oob_rows;
  std::vector<double> oob_predictions;

  std::size_t num_nodes() const noexcept { return left_child.size(); }
  std::size_t depth() const;
  // Rows go left when value <= split_value.
  double predict(const Matrix& x, std::size_t row) const;
};

struct Forest {
  TaskKind task = TaskKind::kRegression;
  std::size_t num_classes = 0;
  std::size_t num_features = 0;
  std::size_t num_rows = 0;
  std::vector<Tree> trees;

  // Mean of tree predictions, or majority vote with ties to the smallest class index.
  double predict(const Matrix& x, std::size_t row) const;
};

Forest fit_forest(const Matrix& x, const Response& y, const ForestConfig& cfg, SeedSpec seed);

// Out-of-bag R^2 (regression) or accuracy (classification) on the training data of `f`.
// Rows that were in-bag for every tree are skipped; fewer than half the rows with OOB
// predictions raises NoOobRows.
double oob_score(const Forest& f, const Matrix& x, const Response& y);

// nu(S): clamped OOB skill of a forest trained on the columns of S. The forest seed is
// derived from the column contents and the response, not from column positions, so a
// given set of columns always gets the same randomness and column order is irrelevant.
class EvaluationFunction {
 public:
  EvaluationFunction(ForestConfig cfg, SeedSpec seed) : cfg_(cfg), seed_(seed) {}
  EvaluationFunction(const EvaluationFunction&) = delete;
  EvaluationFunction& operator=(const EvaluationFunction&) = delete;

  // 0 for an empty matrix without fitting anything.
  double nu(const Matrix& x, const Response& y) const;
  // Unclamped OOB score; fits a model like nu() and counts it.
  double raw_score(const Matrix& x, const Response& y) const;

  std::size_t trainings() const noexcept { return trainings_.load(); }
  const ForestConfig& config() const noexcept { return cfg_; }
  SeedSpec seed() const noexcept { return seed_; }

  // Seed used for a particular (matrix, response) pair.
  SeedSpec seed_for(const Matrix& x, const Response& y) const;

 private:
  ForestConfig cfg_;
  SeedSpec seed_;
  mutable std::atomic<std::size_t> trainings_{0};
};

}  // namespace umfi
