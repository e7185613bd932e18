#include "umfi/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "umfi/error.hpp"

namespace umfi {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonNumeric: return "NonNumeric";
    case ErrorCode::kTooFewRows: return "TooFewRows";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kEmptyFeatureSet: return "EmptyFeatureSet";
    case ErrorCode::kNoOobRows: return "NoOobRows";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kSubsetBudgetExceeded: return "SubsetBudgetExceeded";
    case ErrorCode::kOverlappingGroups: return "OverlappingGroups";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kRangeExceedsFeatures: return "RangeExceedsFeatures";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// Matrix

Matrix Matrix::from_columns(std::size_t rows, const std::vector<std::vector<double>>& columns) {
  Matrix m(rows, 0);
  for (const auto& c : columns) m.append_column(c);
  return m;
}

void Matrix::append_column(std::span<const double> values) {
  if (cols_ == 0 && rows_ == 0) rows_ = values.size();
  if (values.size() != rows_) {
    throw UmfiError(ErrorCode::kLengthMismatch, "column length " + std::to_string(values.size()) +
                                                    " != rows " + std::to_string(rows_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++cols_;
}

// ---------------------------------------------------------------------------
// Task / Response

std::string_view task_name(TaskKind task) {
  return task == TaskKind::kRegression ? "reg" : "cls";
}

std::optional<TaskKind> parse_task(std::string_view name) {
  if (name == "reg" || name == "regression") return TaskKind::kRegression;
  if (name == "cls" || name == "classification") return TaskKind::kClassification;
  return std::nullopt;
}

Response Response::regression(std::vector<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw UmfiError(ErrorCode::kNonFinite, "non-finite response value");
  }
  return Response{TaskKind::kRegression, std::move(values), 0};
}

Response Response::classification(std::vector<double> labels) {
  std::set<long long> seen;
  for (double v : labels) {
    if (!std::isfinite(v) || v < 0 || v != std::floor(v)) {
      throw UmfiError(ErrorCode::kInvalidArgument, "class labels must be non-negative integers");
    }
    seen.insert(static_cast<long long>(v));
  }
  const std::size_t k = seen.size();
  if (k < 2) throw UmfiError(ErrorCode::kInvalidArgument, "classification needs at least 2 classes");
  if (static_cast<std::size_t>(*seen.rbegin()) != k - 1) {
    throw UmfiError(ErrorCode::kInvalidArgument, "class labels must be contiguous 0..k-1");
  }
  return Response{TaskKind::kClassification, std::move(labels), k};
}

// ---------------------------------------------------------------------------
// FeatureSubset

FeatureSubset::FeatureSubset(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end()) {
    throw UmfiError(ErrorCode::kInvalidArgument, "feature subset has duplicate indices");
  }
}

FeatureSubset FeatureSubset::all(std::size_t p) {
  std::vector<std::size_t> idx(p);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return FeatureSubset(std::move(idx));
}

FeatureSubset FeatureSubset::from_mask(std::uint64_t mask) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; mask != 0; ++j, mask >>= 1) {
    if (mask & 1U) idx.push_back(j);
  }
  return FeatureSubset(std::move(idx));
}

bool FeatureSubset::contains(std::size_t index) const {
  return std::binary_search(indices_.begin(), indices_.end(), index);
}

FeatureSubset FeatureSubset::with(std::size_t index) const {
  if (contains(index)) return *this;
  auto idx = indices_;
  idx.insert(std::lower_bound(idx.begin(), idx.end(), index), index);
  FeatureSubset out;
  out.indices_ = std::move(idx);
  return out;
}

FeatureSubset FeatureSubset::without(std::size_t index) const {
  FeatureSubset out;
  out.indices_.reserve(indices_.size());
  for (auto i : indices_) {
    if (i != index) out.indices_.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Matrix features, std::vector<std::string> feature_names, Response response,
                 std::string response_name, std::vector<std::string> class_names)
    : features_(std::move(features)),
      feature_names_(std::move(feature_names)),
      response_(std::move(response)),
      response_name_(std::move(response_name)),
      class_names_(std::move(class_names)) {
  if (features_.rows() < 2) throw UmfiError(ErrorCode::kTooFewRows, "need at least 2 rows");
  if (features_.cols() < 1) throw UmfiError(ErrorCode::kInvalidArgument, "need at least 1 feature");
  if (feature_names_.size() != features_.cols()) {
    throw UmfiError(ErrorCode::kLengthMismatch, "feature_names size != feature count");
  }
  if (response_.size() != features_.rows()) {
    throw UmfiError(ErrorCode::kLengthMismatch, "response length != rows");
  }
  std::unordered_set<std::string> names;
  for (const auto& name : feature_names_) {
    if (name.empty()) throw UmfiError(ErrorCode::kInvalidArgument, "empty feature name");
    if (!names.insert(name).second) {
      throw UmfiError(ErrorCode::kInvalidArgument, "duplicate feature name '" + name + "'");
    }
  }
  for (std::size_t j = 0; j < features_.cols(); ++j) {
    for (double v : features_.column(j)) {
      if (!std::isfinite(v)) {
        throw UmfiError(ErrorCode::kNonFinite, "non-finite value in column '" + feature_names_[j] + "'");
      }
    }
  }
  if (response_.task == TaskKind::kClassification && response_.num_classes < 2) {
    throw UmfiError(ErrorCode::kInvalidArgument, "classification needs at least 2 classes");
  }
}

std::optional<std::size_t> Dataset::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < feature_names_.size(); ++j) {
    if (feature_names_[j] == name) return j;
  }
  return std::nullopt;
}

Dataset Dataset::select(const FeatureSubset& s) const {
  std::vector<std::string> names;
  for (auto j : s.indices()) {
    if (j >= p()) throw UmfiError(ErrorCode::kIndexOutOfRange, "feature index " + std::to_string(j));
    names.push_back(feature_names_[j]);
  }
  return Dataset(subset_matrix(features_, s), std::move(names), response_, response_name_, class_names_);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::vector<std::string>> parse_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started && field.empty()) {
          in_quotes = true;
          field_started = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',': end_field(); break;
      case '\r': break;
      case '\n': end_record(); break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw UmfiError(ErrorCode::kNonNumeric, "unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();
  return records;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string quote_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

Dataset parse_csv(std::string_view text, std::string_view response_column, TaskKind task) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  auto records = parse_records(text);
  if (records.empty()) throw UmfiError(ErrorCode::kTooFewRows, "CSV has no header");
  const auto& header = records.front();
  std::optional<std::size_t> response_idx;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (trim(header[j]) == response_column) response_idx = j;
  }
  if (!response_idx) {
    throw UmfiError(ErrorCode::kMissingColumn, "response column '" + std::string(response_column) + "' not found");
  }
  const std::size_t n = records.size() - 1;
  if (n < 2) throw UmfiError(ErrorCode::kTooFewRows, "need at least 2 data rows, got " + std::to_string(n));

  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j == *response_idx) continue;
    names.emplace_back(trim(header[j]));
    columns.emplace_back();
    columns.back().reserve(n);
  }
  std::vector<std::string> response_text;
  response_text.reserve(n);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size()) {
      throw UmfiError(ErrorCode::kNonNumeric, "row " + std::to_string(r) + " has " + std::to_string(rec.size()) +
                                                  " fields, header has " + std::to_string(header.size()));
    }
    std::size_t c = 0;
    for (std::size_t j = 0; j < rec.size(); ++j) {
      if (j == *response_idx) {
        response_text.emplace_back(trim(rec[j]));
        continue;
      }
      auto v = parse_number(rec[j]);
      if (!v) {
        throw UmfiError(ErrorCode::kNonNumeric, "row " + std::to_string(r) + ", column '" + names[c] +
                                                    "': cannot parse '" + rec[j] + "'");
      }
      if (!std::isfinite(*v)) {
        throw UmfiError(ErrorCode::kNonFinite, "row " + std::to_string(r) + ", column '" + names[c] + "'");
      }
      columns[c++].push_back(*v);
    }
  }

  Response response;
  std::vector<std::string> class_names;
  if (task == TaskKind::kRegression) {
    std::vector<double> y;
    y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto v = parse_number(response_text[i]);
      if (!v) throw UmfiError(ErrorCode::kNonNumeric, "response row " + std::to_string(i + 1) + ": '" + response_text[i] + "'");
      if (!std::isfinite(*v)) throw UmfiError(ErrorCode::kNonFinite, "response row " + std::to_string(i + 1));
      y.push_back(*v);
    }
    response = Response::regression(std::move(y));
  } else {
    // Labels are mapped to 0..k-1 in sorted order: numerically if every label is a
    // number, lexicographically otherwise.
    for (std::size_t i = 0; i < n; ++i) {
      if (response_text[i].empty()) throw UmfiError(ErrorCode::kNonNumeric, "blank class label in row " + std::to_string(i + 1));
    }
    std::vector<std::string> uniq = response_text;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    const bool numeric = std::all_of(uniq.begin(), uniq.end(), [](const std::string& s) {
      auto v = parse_number(s);
      return v && std::isfinite(*v);
    });
    if (numeric) {
      std::stable_sort(uniq.begin(), uniq.end(), [](const std::string& a, const std::string& b) {
        return *parse_number(a) < *parse_number(b);
      });
    }
    std::vector<double> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = std::find(uniq.begin(), uniq.end(), response_text[i]);
      labels[i] = static_cast<double>(it - uniq.begin());
    }
    response = Response::classification(std::move(labels));
    class_names = std::move(uniq);
  }
  return Dataset(Matrix::from_columns(n, columns), std::move(names), std::move(response),
                 std::string(response_column), std::move(class_names));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UmfiError(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset load_csv(const std::filesystem::path& path, std::string_view response_column, TaskKind task) {
  return parse_csv(read_file(path), response_column, task);
}

FeatureTable parse_feature_table(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  auto records = parse_records(text);
  if (records.empty()) throw UmfiError(ErrorCode::kTooFewRows, "CSV has no header");
  FeatureTable table;
  for (const auto& h : records.front()) table.names.emplace_back(trim(h));
  const std::size_t n = records.size() - 1;
  if (n < 2) throw UmfiError(ErrorCode::kTooFewRows, "need at least 2 data rows, got " + std::to_string(n));
  table.values = Matrix(n, table.names.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.names.size()) {
      throw UmfiError(ErrorCode::kNonNumeric, "row " + std::to_string(r) + " has the wrong number of fields");
    }
    for (std::size_t j = 0; j < table.names.size(); ++j) {
      auto v = parse_number(records[r][j]);
      if (!v) {
        throw UmfiError(ErrorCode::kNonNumeric, "row " + std::to_string(r) + ", column '" + table.names[j] +
                                                    "': cannot parse '" + records[r][j] + "'");
      }
      if (!std::isfinite(*v)) {
        throw UmfiError(ErrorCode::kNonFinite, "row " + std::to_string(r) + ", column '" + table.names[j] + "'");
      }
      table.values(r - 1, j) = *v;
    }
  }
  return table;
}

std::string to_csv(const Dataset& d) {
  std::string out;
  for (const auto& name : d.feature_names()) {
    out += quote_field(name);
    out += ',';
  }
  out += quote_field(d.response_name());
  out += '\n';
  const auto& y = d.response();
  for (std::size_t i = 0; i < d.n(); ++i) {
    for (std::size_t j = 0; j < d.p(); ++j) {
      out += format_double(d.features()(i, j));
      out += ',';
    }
    if (y.task == TaskKind::kClassification && !d.class_names().empty()) {
      out += quote_field(d.class_names()[static_cast<std::size_t>(y.values[i])]);
    } else {
      out += format_double(y.values[i]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& d, const std::filesystem::path& path) { write_file_atomic(path, to_csv(d)); }

std::string matrix_to_csv(const Matrix& m, std::span<const std::string> names) {
  if (names.size() != m.cols()) throw UmfiError(ErrorCode::kLengthMismatch, "header size != column count");
  std::string out;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (j) out += ',';
    out += quote_field(names[j]);
  }
  out += '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

Matrix subset_matrix(const Matrix& m, const FeatureSubset& s) {
  Matrix out(m.rows(), 0);
  for (auto j : s.indices()) {
    if (j >= m.cols()) {
      throw UmfiError(ErrorCode::kIndexOutOfRange,
                      "column " + std::to_string(j) + " >= " + std::to_string(m.cols()));
    }
    out.append_column(m.column(j));
  }
  return out;
}

Matrix subset_matrix(const Dataset& d, const FeatureSubset& s) { return subset_matrix(d.features(), s); }

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UmfiError(ErrorCode::kIo, "cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw UmfiError(ErrorCode::kIo, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw UmfiError(ErrorCode::kIo, "rename to '" + path.string() + "' failed: " + ec.message());
}

// ---------------------------------------------------------------------------
// Reports

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kMciExact: return "MCI_EXACT";
    case Method::kMciK3: return "MCI_K3";
    case Method::kUmfiLr: return "UMFI_LR";
    case Method::kUmfiOt: return "UMFI_OT";
  }
  return "UNKNOWN";
}

std::optional<Method> parse_method(std::string_view name) {
  if (name == "mci" || name == "mci-exact" || name == "MCI_EXACT") return Method::kMciExact;
  if (name == "mci-k3" || name == "MCI_K3") return Method::kMciK3;
  if (name == "umfi-lr" || name == "lr" || name == "UMFI_LR") return Method::kUmfiLr;
  if (name == "umfi-ot" || name == "ot" || name == "UMFI_OT") return Method::kUmfiOt;
  return std::nullopt;
}

std::vector<double> ImportanceReport::shares() const {
  std::vector<double> out(scores.size(), 0.0);
  double total = 0.0;
  for (double s : scores) total += std::max(s, 0.0);
  if (total <= 0.0) return out;
  for (std::size_t j = 0; j < scores.size(); ++j) out[j] = std::max(scores[j], 0.0) / total;
  return out;
}

std::string report_to_json(const ImportanceReport& r, bool include_timing) {
  nlohmann::ordered_json j;
  j["method"] = method_name(r.method);
  auto shares = r.shares();
  nlohmann::ordered_json scores = nlohmann::ordered_json::object();
  nlohmann::ordered_json raw = nlohmann::ordered_json::object();
  nlohmann::ordered_json share_obj = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < r.feature_names.size(); ++k) {
    scores[r.feature_names[k]] = r.scores[k];
    raw[r.feature_names[k]] = r.raw_scores.empty() ? r.scores[k] : r.raw_scores[k];
    share_obj[r.feature_names[k]] = shares[k];
  }
  j["scores"] = std::move(scores);
  j["shares"] = std::move(share_obj);
  j["raw_scores"] = std::move(raw);
  j["trainings"] = r.trainings;
  j["wall_time_s"] = include_timing ? r.wall_time_s : 0.0;
  j["seed"] = r.seed;
  j["metadata"] = r.metadata;
  return j.dump(2) + "\n";
}

}  // namespace umfi
