#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "umfi/random.hpp"

namespace umfi {

// Dense column-major matrix of doubles. Columns are the unit of work everywhere in the
// library (subsetting, dependency removal, split search), so they are stored contiguously.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix from_columns(std::size_t rows, const std::vector<std::vector<double>>& columns);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return cols_ == 0; }

  std::span<const double> column(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }
  std::span<double> column(std::size_t j) { return {data_.data() + j * rows_, rows_}; }

  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }

  void append_column(std::span<const double> values);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class TaskKind { kRegression, kClassification };

std::string_view task_name(TaskKind task);
std::optional<TaskKind> parse_task(std::string_view name);

// Response vector with its task. Class labels are stored as exact integers 0..k-1.
struct Response {
  TaskKind task = TaskKind::kRegression;
  std::vector<double> values;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return values.size(); }

  static Response regression(std::vector<double> values);
  // Labels must already be contiguous integers 0..k-1, k >= 2.
  static Response classification(std::vector<double> labels);

  friend bool operator==(const Response&, const Response&) = default;
};

// Sorted, distinct column indices.
class FeatureSubset {
 public:
  FeatureSubset() = default;
  explicit FeatureSubset(std::vector<std::size_t> indices);

  static FeatureSubset all(std::size_t p);
  static FeatureSubset from_mask(std::uint64_t mask);

  std::span<const std::size_t> indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  bool contains(std::size_t index) const;

  FeatureSubset with(std::size_t index) const;
  FeatureSubset without(std::size_t index) const;

  friend auto operator<=>(const FeatureSubset&, const FeatureSubset&) = default;

 private:
  std::vector<std::size_t> indices_;
};

// Immutable after construction; validated by the constructor.
class Dataset {
 public:
  Dataset(Matrix features, std::vector<std::string> feature_names, Response response,
          std::string response_name = "y", std::vector<std::string> class_names = {});

  const Matrix& features() const noexcept { return features_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const Response& response() const noexcept { return response_; }
  const std::string& response_name() const noexcept { return response_name_; }
  // Original label text for each class index (classification only; may be empty).
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  TaskKind task() const noexcept { return response_.task; }
  std::size_t n() const noexcept { return features_.rows(); }
  std::size_t p() const noexcept { return features_.cols(); }

  std::optional<std::size_t> index_of(std::string_view name) const;
  // Dataset restricted to the given columns (names and order follow the subset).
  Dataset select(const FeatureSubset& s) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  Matrix features_;
  std::vector<std::string> feature_names_;
  Response response_;
  std::string response_name_;
  std::vector<std::string> class_names_;
};

Dataset load_csv(const std::filesystem::path& path, std::string_view response_column, TaskKind task);
std::string read_file(const std::filesystem::path& path);
Dataset parse_csv(std::string_view text, std::string_view response_column, TaskKind task);

// A CSV of numeric columns with no designated response.
struct FeatureTable {
  std::vector<std::string> names;
  Matrix values;
};
FeatureTable parse_feature_table(std::string_view text);

// Features first, response last. Values are written with round-trip precision.
std::string to_csv(const Dataset& d);
void write_csv(const Dataset& d, const std::filesystem::path& path);
// Writes a bare matrix with a header row.
std::string matrix_to_csv(const Matrix& m, std::span<const std::string> names);

Matrix subset_matrix(const Dataset& d, const FeatureSubset& s);
Matrix subset_matrix(const Matrix& m, const FeatureSubset& s);

// Writes via a temporary file in the same directory, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

enum class Method { kMciExact, kMciK3, kUmfiLr, kUmfiOt };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

struct ImportanceReport {
  Method method = Method::kUmfiOt;
  std::vector<std::string> feature_names;
  // Scores after the configured clamp; raw_scores keep the unclamped differences.
  std::vector<double> scores;
  std::vector<double> raw_scores;
  std::size_t trainings = 0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> metadata;

  // Share of total per feature; all zeros when no score is positive.
  std::vector<double> shares() const;
};

std::string report_to_json(const ImportanceReport& r, bool include_timing = true);

}  // namespace umfi
