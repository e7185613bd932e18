#include "umfi/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "umfi/error.hpp"
#include "umfi/parallel.hpp"

namespace umfi {

std::size_t ForestConfig::resolved_mtry(TaskKind task, std::size_t p) const {
  std::size_t m;
  if (mtry) {
    m = *mtry;
  } else if (task == TaskKind::kClassification) {
    m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
  } else {
    m = (p + 2) / 3;
  }
  return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(p, 1));
}

std::size_t ForestConfig::resolved_min_node_size(TaskKind task) const {
  if (min_node_size) return std::max<std::size_t>(*min_node_size, 1);
  return task == TaskKind::kClassification ? 1 : 5;
}

std::size_t Tree::depth() const {
  if (left_child.empty()) return 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
  std::size_t best = 0;
  while (!stack.empty()) {
    auto [node, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (left_child[node] != 0) {
      stack.emplace_back(left_child[node], d + 1);
      stack.emplace_back(right_child[node], d + 1);
    }
  }
  return best;
}

double Tree::predict(const Matrix& x, std::size_t row) const {
  std::uint32_t node = 0;
  while (left_child[node] != 0) {
    node = x(row, split_feature[node]) <= split_value[node] ? left_child[node] : right_child[node];
  }
  return leaf_value[node];
}

double Forest::predict(const Matrix& x, std::size_t row) const {
  if (trees.empty()) throw UmfiError(ErrorCode::kInvalidArgument, "empty forest");
  if (task == TaskKind::kRegression) {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x, row);
    return s / static_cast<double>(trees.size());
  }
  std::vector<std::size_t> votes(num_classes, 0);
  for (const auto& t : trees) ++votes[static_cast<std::size_t>(t.predict(x, row))];
  return static_cast<double>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

namespace {

// Per-column sorted unique values and the rank of every row within them. Split search
// and partitioning work on ranks only.
struct ColumnIndex {
  std::vector<double> unique_values;
  std::vector<std::uint32_t> rank;
};

ColumnIndex index_column(std::span<const double> values) {
  ColumnIndex c;
  c.unique_values.assign(values.begin(), values.end());
  std::sort(c.unique_values.begin(), c.unique_values.end());
  c.unique_values.erase(std::unique(c.unique_values.begin(), c.unique_values.end()), c.unique_values.end());
  c.rank.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    c.rank[i] = static_cast<std::uint32_t>(
        std::lower_bound(c.unique_values.begin(), c.unique_values.end(), values[i]) - c.unique_values.begin());
  }
  return c;
}

struct SplitCandidate {
  double decrease = -1.0;
  std::size_t feature = 0;
  std::uint32_t rank = 0;  // rows with rank <= this go left
  double value = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(const std::vector<ColumnIndex>& columns, const Response& y, std::size_t mtry, std::size_t min_node_size)
      : columns_(columns), y_(y), mtry_(mtry), min_node_size_(min_node_size) {
    for (const auto& c : columns_) max_unique_ = std::max(max_unique_, c.unique_values.size());
    classes_ = y_.task == TaskKind::kClassification ? y_.num_classes : 0;
    labels_.resize(y_.size());
    if (classes_ > 0) {
      for (std::size_t i = 0; i < y_.size(); ++i) labels_[i] = static_cast<std::uint32_t>(y_.values[i]);
    }
  }

  Tree grow(Rng& rng) {
    const std::size_t n = y_.size();
    std::vector<std::uint32_t> inbag(n, 0);
    samples_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<std::uint32_t>(rng.index(n));
      samples_[i] = r;
      ++inbag[r];
    }
    feature_pool_.resize(columns_.size());
    std::iota(feature_pool_.begin(), feature_pool_.end(), std::size_t{0});

    Tree tree;
    add_node(tree);
    struct Pending {
      std::size_t start, end;
      std::uint32_t node;
    };
    std::vector<Pending> stack{{0, n, 0}};
    while (!stack.empty()) {
      const Pending job = stack.back();
      stack.pop_back();
      auto split = find_split(job.start, job.end, rng);
      if (!split) {
        tree.leaf_value[job.node] = leaf_value(job.start, job.end);
        continue;
      }
      const auto& rank = columns_[split->feature].rank;
      auto mid_it = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(job.start),
                                   samples_.begin() + static_cast<std::ptrdiff_t>(job.end),
                                   [&](std::uint32_t s) { return rank[s] <= split->rank; });
      const auto mid = static_cast<std::size_t>(mid_it - samples_.begin());
      const std::uint32_t left = add_node(tree);
      const std::uint32_t right = add_node(tree);
      tree.left_child[job.node] = left;
      tree.right_child[job.node] = right;
      tree.split_feature[job.node] = static_cast<std::uint32_t>(split->feature);
      tree.split_value[job.node] = split->value;
      split_rank_.resize(tree.num_nodes());
      split_rank_[job.node] = split->rank;
      stack.push_back({mid, job.end, right});
      stack.push_back({job.start, mid, left});
    }

    // Out-of-bag predictions, routed by rank so they agree exactly with training.
    split_rank_.resize(tree.num_nodes());
    for (std::size_t i = 0; i < n; ++i) {
      if (inbag[i] != 0) continue;
      std::uint32_t node = 0;
      while (tree.left_child[node] != 0) {
        node = columns_[tree.split_feature[node]].rank[i] <= split_rank_[node] ? tree.left_child[node]
                                                                                : tree.right_child[node];
      }
      tree.oob_rows.push_back(static_cast<std::uint32_t>(i));
      tree.oob_predictions.push_back(tree.leaf_value[node]);
    }
    return tree;
  }

 private:
  static std::uint32_t add_node(Tree& t) {
    t.left_child.push_back(0);
    t.right_child.push_back(0);
    t.split_feature.push_back(0);
    t.split_value.push_back(0.0);
    t.leaf_value.push_back(0.0);
    return static_cast<std::uint32_t>(t.left_child.size() - 1);
  }

  double leaf_value(std::size_t start, std::size_t end) const {
    if (classes_ == 0) {
      double s = 0.0;
      for (std::size_t k = start; k < end; ++k) s += y_.values[samples_[k]];
      return s / static_cast<double>(end - start);
    }
    std::vector<std::size_t> counts(classes_, 0);
    for (std::size_t k = start; k < end; ++k) ++counts[labels_[samples_[k]]];
    return static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  bool is_pure(std::size_t start, std::size_t end) const {
    const std::uint32_t first = samples_[start];
    for (std::size_t k = start + 1; k < end; ++k) {
      if (classes_ == 0 ? y_.values[samples_[k]] != y_.values[first] : labels_[samples_[k]] != labels_[first]) {
        return false;
      }
    }
    return true;
  }

  std::optional<SplitCandidate> find_split(std::size_t start, std::size_t end, Rng& rng) {
    const std::size_t m = end - start;
    if (m <= min_node_size_ || is_pure(start, end)) return std::nullopt;

    node_sum_ = 0.0;
    node_class_counts_.assign(classes_, 0);
    for (std::size_t k = start; k < end; ++k) {
      if (classes_ == 0) {
        node_sum_ += y_.values[samples_[k]];
      } else {
        ++node_class_counts_[labels_[samples_[k]]];
      }
    }

    // Partial Fisher-Yates draw of mtry candidate features without replacement.
    SplitCandidate best;
    for (std::size_t c = 0; c < mtry_; ++c) {
      const std::size_t pick = c + rng.index(feature_pool_.size() - c);
      std::swap(feature_pool_[c], feature_pool_[pick]);
      const std::size_t feature = feature_pool_[c];
      const auto& col = columns_[feature];
      if (col.unique_values.size() < 2) continue;
      const double log_m = std::log2(static_cast<double>(m) + 1.0);
      if (static_cast<double>(col.unique_values.size()) <= 0.5 * static_cast<double>(m) * log_m) {
        scan_by_counting(start, end, feature, best);
      } else {
        scan_by_sorting(start, end, feature, best);
      }
    }
    if (best.decrease < 0.0) return std::nullopt;
    return best;
  }

  // Considers the split between adjacent present ranks lo | hi.
  void consider(std::size_t feature, std::uint32_t lo, std::uint32_t hi, double decrease, SplitCandidate& best) const {
    if (decrease > best.decrease) {
      const auto& u = columns_[feature].unique_values;
      best.decrease = decrease;
      best.feature = feature;
      best.rank = lo;
      best.value = 0.5 * (u[lo] + u[hi]);
      if (best.value == u[hi]) best.value = u[lo];
    }
  }

  double class_decrease(std::size_t n_left, std::size_t m) const {
    double left = 0.0, right = 0.0;
    for (std::size_t c = 0; c < classes_; ++c) {
      const double l = static_cast<double>(left_class_counts_[c]);
      const double r = static_cast<double>(node_class_counts_[c] - left_class_counts_[c]);
      left += l * l;
      right += r * r;
    }
    return left / static_cast<double>(n_left) + right / static_cast<double>(m - n_left);
  }

  void scan_by_counting(std::size_t start, std::size_t end, std::size_t feature, SplitCandidate& best) {
    const auto& col = columns_[feature];
    const std::size_t u = col.unique_values.size();
    const std::size_t m = end - start;
    counts_.assign(u, 0);
    if (classes_ == 0) {
      sums_.assign(u, 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto s = samples_[k];
        ++counts_[col.rank[s]];
        sums_[col.rank[s]] += y_.values[s];
      }
    } else {
      class_counts_.assign(u * classes_, 0);
      for (std::size_t k = start; k < end; ++k) {
        const auto s = samples_[k];
        ++counts_[col.rank[s]];
        ++class_counts_[col.rank[s] * classes_ + labels_[s]];
      }
      left_class_counts_.assign(classes_, 0);
    }
    std::size_t n_left = 0;
    double sum_left = 0.0;
    std::uint32_t last = 0;
    for (std::uint32_t r = 0; r < u; ++r) {
      if (counts_[r] == 0) continue;
      if (n_left > 0) {
        double decrease;
        if (classes_ == 0) {
          const double sum_right = node_sum_ - sum_left;
          decrease = sum_left * sum_left / static_cast<double>(n_left) +
                     sum_right * sum_right / static_cast<double>(m - n_left);
        } else {
          decrease = class_decrease(n_left, m);
        }
        consider(feature, last, r, decrease, best);
      }
      n_left += counts_[r];
      if (classes_ == 0) {
        sum_left += sums_[r];
      } else {
        for (std::size_t c = 0; c < classes_; ++c) left_class_counts_[c] += class_counts_[r * classes_ + c];
      }
      last = r;
    }
  }

  void scan_by_sorting(std::size_t start, std::size_t end, std::size_t feature, SplitCandidate& best) {
    const auto& col = columns_[feature];
    const std::size_t m = end - start;
    keys_.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      const auto s = samples_[start + k];
      keys_[k] = (static_cast<std::uint64_t>(col.rank[s]) << 32) | s;
    }
    std::sort(keys_.begin(), keys_.end());
    if (classes_ > 0) left_class_counts_.assign(classes_, 0);
    std::size_t n_left = 0;
    double sum_left = 0.0;
    std::size_t k = 0;
    while (k < m) {
      const auto r = static_cast<std::uint32_t>(keys_[k] >> 32);
      if (n_left > 0) {
        double decrease;
        if (classes_ == 0) {
          const double sum_right = node_sum_ - sum_left;
          decrease = sum_left * sum_left / static_cast<double>(n_left) +
                     sum_right * sum_right / static_cast<double>(m - n_left);
        } else {
          decrease = class_decrease(n_left, m);
        }
        const auto prev = static_cast<std::uint32_t>(keys_[k - 1] >> 32);
        consider(feature, prev, r, decrease, best);
      }
      while (k < m && static_cast<std::uint32_t>(keys_[k] >> 32) == r) {
        const auto s = static_cast<std::uint32_t>(keys_[k] & 0xffffffffULL);
        ++n_left;
        if (classes_ == 0) {
          sum_left += y_.values[s];
        } else {
          ++left_class_counts_[labels_[s]];
        }
        ++k;
      }
    }
  }

  const std::vector<ColumnIndex>& columns_;
  const Response& y_;
  std::size_t mtry_;
  std::size_t min_node_size_;
  std::size_t max_unique_ = 0;
  std::size_t classes_ = 0;
  std::vector<std::uint32_t> labels_;

  std::vector<std::uint32_t> samples_;
  std::vector<std::size_t> feature_pool_;
  std::vector<std::uint32_t> split_rank_;
  double node_sum_ = 0.0;
  std::vector<std::size_t> node_class_counts_;
  std::vector<std::size_t> left_class_counts_;
  std::vector<std::size_t> counts_;
  std::vector<double> sums_;
  std::vector<std::size_t> class_counts_;
  std::vector<std::uint64_t> keys_;
};

}  // namespace

Forest fit_forest(const Matrix& x, const Response& y, const ForestConfig& cfg, SeedSpec seed) {
  if (x.cols() == 0) throw UmfiError(ErrorCode::kEmptyFeatureSet, "cannot fit a forest on zero features");
  if (x.rows() < 2) throw UmfiError(ErrorCode::kTooFewRows, "need at least 2 rows");
  if (y.size() != x.rows()) throw UmfiError(ErrorCode::kLengthMismatch, "response length != rows");
  if (cfg.n_trees < 1) throw UmfiError(ErrorCode::kInvalidArgument, "n_trees must be >= 1");
  if (cfg.mtry && (*cfg.mtry < 1 || *cfg.mtry > x.cols())) {
    throw UmfiError(ErrorCode::kInvalidArgument, "mtry must lie in [1, p]");
  }
  if (y.task == TaskKind::kClassification && y.num_classes < 2) {
    throw UmfiError(ErrorCode::kInvalidArgument, "classification response needs >= 2 classes");
  }

  std::vector<ColumnIndex> columns;
  columns.reserve(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) columns.push_back(index_column(x.column(j)));

  const std::size_t mtry = cfg.resolved_mtry(y.task, x.cols());
  const std::size_t min_node = cfg.resolved_min_node_size(y.task);

  Forest forest;
  forest.task = y.task;
  forest.num_classes = y.num_classes;
  forest.num_features = x.cols();
  forest.num_rows = x.rows();
  forest.trees.resize(cfg.n_trees);
  parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t t) {
    TreeGrower grower(columns, y, mtry, min_node);
    Rng rng(seed.derive(StreamKind::kTree, t));
    forest.trees[t] = grower.grow(rng);
  });
  return forest;
}

double oob_score(const Forest& f, const Matrix& x, const Response& y) {
  const std::size_t n = y.size();
  if (x.rows() != n || f.num_rows != n) throw UmfiError(ErrorCode::kLengthMismatch, "data does not match forest");
  std::vector<std::size_t> hits(n, 0);
  if (f.task == TaskKind::kRegression) {
    std::vector<double> sums(n, 0.0);
    for (const auto& t : f.trees) {
      for (std::size_t k = 0; k < t.oob_rows.size(); ++k) {
        sums[t.oob_rows[k]] += t.oob_predictions[k];
        ++hits[t.oob_rows[k]];
      }
    }
    std::size_t used = 0;
    double y_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (hits[i] > 0) {
        ++used;
        y_sum += y.values[i];
      }
    }
    if (2 * used < n || used < 2) throw UmfiError(ErrorCode::kNoOobRows, "too few rows with out-of-bag predictions");
    const double y_mean = y_sum / static_cast<double>(used);
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (hits[i] == 0) continue;
      const double pred = sums[i] / static_cast<double>(hits[i]);
      sse += (y.values[i] - pred) * (y.values[i] - pred);
      sst += (y.values[i] - y_mean) * (y.values[i] - y_mean);
    }
    if (sst <= 0.0) return sse <= 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return 1.0 - sse / sst;
  }

  const std::size_t k = f.num_classes;
  std::vector<std::size_t> votes(n * k, 0);
  for (const auto& t : f.trees) {
    for (std::size_t r = 0; r < t.oob_rows.size(); ++r) {
      ++votes[t.oob_rows[r] * k + static_cast<std::size_t>(t.oob_predictions[r])];
      ++hits[t.oob_rows[r]];
    }
  }
  std::size_t used = 0, correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i] == 0) continue;
    ++used;
    const auto* row = votes.data() + i * k;
    const auto vote = static_cast<std::size_t>(std::max_element(row, row + k) - row);
    if (vote == static_cast<std::size_t>(y.values[i])) ++correct;
  }
  if (2 * used < n || used == 0) throw UmfiError(ErrorCode::kNoOobRows, "too few rows with out-of-bag predictions");
  return static_cast<double>(correct) / static_cast<double>(used);
}

SeedSpec EvaluationFunction::seed_for(const Matrix& x, const Response& y) const {
  std::vector<std::uint64_t> hashes(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) hashes[j] = hash_doubles(x.column(j));
  std::sort(hashes.begin(), hashes.end());
  std::uint64_t h = hash_doubles(y.values);
  for (auto c : hashes) h = hash_combine(h, c);
  return seed_.derive_content(h);
}

namespace {
// Columns reordered by content hash, so that fitting sees the same matrix for any
// permutation of the same columns.
Matrix canonical_columns(const Matrix& x) {
  std::vector<std::pair<std::uint64_t, std::size_t>> order(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) order[j] = {hash_doubles(x.column(j)), j};
  std::sort(order.begin(), order.end());
  Matrix out(x.rows(), 0);
  for (const auto& [h, j] : order) out.append_column(x.column(j));
  return out;
}
}  // namespace

double EvaluationFunction::raw_score(const Matrix& x, const Response& y) const {
  const Matrix canonical = canonical_columns(x);
  const Forest forest = fit_forest(canonical, y, cfg_, seed_for(x, y));
  trainings_.fetch_add(1);
  return oob_score(forest, canonical, y);
}

double EvaluationFunction::nu(const Matrix& x, const Response& y) const {
  if (x.cols() == 0) return 0.0;
  return std::clamp(raw_score(x, y), 0.0, 1.0);
}

}  // namespace umfi
