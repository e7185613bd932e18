#include "umfi/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "umfi/dependency_removal.hpp"
#include "umfi/error.hpp"
#include "umfi/importance.hpp"
#include "umfi/info_theory.hpp"
#include "umfi/simgen.hpp"

namespace umfi {

// ---------------------------------------------------------------------------
// Benchmark

Dataset synthetic_benchmark_dataset(std::size_t n, std::size_t p, SeedSpec seed) {
  if (n < 2 || p < 1) throw UmfiError(ErrorCode::kInvalidArgument, "synthetic data needs n >= 2 and p >= 1");
  Rng rng(seed.derive(StreamKind::kSynthetic, 0));
  Matrix x(n, p);
  std::vector<double> labels(n);
  const std::size_t informative = std::min<std::size_t>(p, 5);
  for (std::size_t i = 0; i < n; ++i) {
    double score = rng.normal();
    for (std::size_t j = 0; j < p; ++j) {
      x(i, j) = rng.normal();
      if (j < informative) score += x(i, j);
    }
    labels[i] = score > 0.0 ? 1.0 : 0.0;
  }
  // Guarantee both classes exist for tiny n.
  if (std::all_of(labels.begin(), labels.end(), [&](double v) { return v == labels[0]; })) labels[0] = 1.0 - labels[0];
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p; ++j) names.push_back("g" + std::to_string(j + 1));
  return Dataset(std::move(x), std::move(names), Response::classification(std::move(labels)), "label");
}

BenchmarkResult run_benchmark(const Dataset& input, std::span<const std::size_t> p_range, SeedSpec seed,
                              const BenchmarkOptions& options) {
  for (auto p : p_range) {
    if (p < 1 || p > input.p()) {
      throw UmfiError(ErrorCode::kRangeExceedsFeatures,
                      "requested p = " + std::to_string(p) + " but the dataset has " + std::to_string(input.p()));
    }
  }
  BenchmarkResult result;
  for (auto p : p_range) {
    Rng rng(seed.derive(StreamKind::kSubsetDraw, p));
    std::vector<std::size_t> pool(input.p());
    for (std::size_t j = 0; j < pool.size(); ++j) pool[j] = j;
    for (std::size_t k = 0; k < p; ++k) std::swap(pool[k], pool[k + rng.index(pool.size() - k)]);
    pool.resize(p);
    const Dataset d = input.select(FeatureSubset(pool));

    BenchmarkPoint point;
    point.p = p;
    point.features = d.feature_names();
    if (p <= options.mci_max_p) {
      EvaluationFunction e(options.forest, seed);
      const auto report = mci(d, e, MciConfig{MciMode::kExact, 3, 1});
      point.mci_run = true;
      point.wall_time_mci = report.wall_time_s;
      point.trainings_mci = report.trainings;
    }
    EvaluationFunction e(options.forest, seed);
    UmfiConfig cfg;
    cfg.backend.kind = RemovalKind::kOptimalTransport;
    cfg.backend.ot_bin_target = options.ot_bin_target;
    const auto report = umfi(d, e, cfg);
    point.wall_time_umfi = report.wall_time_s;
    point.trainings_umfi = report.trainings;
    result.points.push_back(std::move(point));
  }
  return result;
}

std::string benchmark_to_json(const BenchmarkResult& r, std::uint64_t seed, bool include_timing) {
  nlohmann::ordered_json out;
  out["seed"] = seed;
  out["points"] = nlohmann::ordered_json::array();
  for (const auto& p : r.points) {
    nlohmann::ordered_json j;
    j["p"] = p.p;
    j["features"] = p.features;
    j["mci_run"] = p.mci_run;
    j["trainings_mci"] = p.trainings_mci;
    j["trainings_umfi"] = p.trainings_umfi;
    j["wall_time_mci_s"] = include_timing ? p.wall_time_mci : 0.0;
    j["wall_time_umfi_s"] = include_timing ? p.wall_time_umfi : 0.0;
    out["points"].push_back(std::move(j));
  }
  return out.dump(2) + "\n";
}

std::string benchmark_to_csv(const BenchmarkResult& r) {
  std::ostringstream out;
  out << "p,mci_run,trainings_mci,trainings_umfi,wall_time_mci_s,wall_time_umfi_s\n";
  for (const auto& p : r.points) {
    out << p.p << ',' << (p.mci_run ? 1 : 0) << ',' << p.trainings_mci << ',' << p.trainings_umfi << ','
        << p.wall_time_mci << ',' << p.wall_time_umfi << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw UsageError("not a non-negative integer: '" + std::string(s) + "'");
  return v;
}

// "5..15", "5-15", "5,6,7" or any comma-separated mix of those.
std::vector<std::size_t> parse_p_range(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& part : split_list(text)) {
    auto dots = part.find("..");
    auto dash = part.find('-');
    if (dots != std::string::npos || dash != std::string::npos) {
      const auto cut = dots != std::string::npos ? dots : dash;
      const auto skip = dots != std::string::npos ? 2 : 1;
      const auto lo = parse_size(std::string_view(part).substr(0, cut));
      const auto hi = parse_size(std::string_view(part).substr(cut + skip));
      if (lo > hi) throw UsageError("empty range '" + part + "'");
      for (auto p = lo; p <= hi; ++p) out.push_back(p);
    } else {
      out.push_back(parse_size(part));
    }
  }
  if (out.empty()) throw UsageError("empty --p-range");
  return out;
}

struct ForestFlags {
  std::size_t trees = 100;
  std::optional<std::size_t> mtry;
  std::optional<std::size_t> min_node_size;

  void attach(CLI::App* app) {
    app->add_option("--trees", trees, "Trees per forest")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--mtry", mtry, "Candidate features per split (default: sqrt(p) cls, p/3 reg)")
        ->check(CLI::PositiveNumber);
    app->add_option("--min-node-size", min_node_size, "Minimum node size (default: 1 cls, 5 reg)")
        ->check(CLI::PositiveNumber);
  }
  ForestConfig config(std::size_t threads) const {
    ForestConfig cfg;
    cfg.n_trees = trees;
    cfg.mtry = mtry;
    cfg.min_node_size = min_node_size;
    cfg.threads = threads;
    return cfg;
  }
};

struct RemovalFlags {
  std::size_t bin_size = 100;
  double alpha = 0.01;

  void attach(CLI::App* app) {
    app->add_option("--bin-size", bin_size, "Rows per conditioning bin for optimal transport")
        ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()))
        ->capture_default_str();
    app->add_option("--alpha", alpha, "Slope significance level for linear regression")
        ->check(CLI::Range(1e-300, 1.0 - 1e-12))
        ->capture_default_str();
  }
  RemovalBackend backend(RemovalKind kind) const { return RemovalBackend{kind, bin_size, alpha}; }
};

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(const std::vector<std::string>& args);

 private:
  std::uint64_t seed() const {
    if (seed_) return *seed_;
    if (const char* env = std::getenv("UMFI_SEED"); env != nullptr && *env != '\0') {
      try {
        return parse_size(env);
      } catch (const UsageError&) {
        throw UsageError("UMFI_SEED is not a non-negative integer");
      }
    }
    return 42;
  }

  void log(const std::string& msg) const {
    if (verbose_) err_ << msg << '\n';
  }

  void emit(const std::string& path, const std::string& contents) const {
    if (path.empty()) {
      out_ << contents;
    } else {
      write_file_atomic(path, contents);
      log("wrote " + path);
    }
  }

  TaskKind task() const { return *parse_task(task_); }

  void run_umfi();
  void run_mci();
  void run_remove_deps();
  void run_diagnose();
  void run_simulate();
  void run_benchmark_cmd();

  std::ostream& out_;
  std::ostream& err_;

  // Global
  std::optional<std::uint64_t> seed_;
  std::size_t threads_ = 0;
  bool verbose_ = false;
  bool no_timing_ = false;
  std::string json_path_;
  std::string csv_path_;

  // Shared per-command
  std::string input_;
  std::string response_;
  std::string task_ = "reg";
  std::string method_ = "ot";
  bool no_clamp_ = false;
  std::string mode_ = "exact";
  std::size_t max_subset_size_ = 3;
  std::string protected_;
  std::string output_;
  std::string features_;
  std::string methods_ = "ot,lr";
  std::string design_;
  std::size_t reps_ = 100;
  std::size_t n_ = 500;
  std::string sim_methods_ = "mci,umfi-lr,umfi-ot";
  std::string csv_points_;
  std::size_t exact_mci_max_p_ = 10;
  bool synthetic_ = false;
  std::size_t synthetic_n_ = 571;
  std::size_t synthetic_p_ = 50;
  std::string p_range_ = "5..15";
  std::size_t mci_max_p_ = 15;
  ForestFlags forest_;
  RemovalFlags removal_;
};

int Runner::run(const std::vector<std::string>& args) {
  CLI::App app{"Ultra marginal feature importance (UMFI) and marginal contribution importance (MCI)", "umfi"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.add_option("--seed", seed_, "Master seed (default: $UMFI_SEED or 42)");
  app.add_option("--threads", threads_, "Worker threads, 0 = all cores (never changes results)")->capture_default_str();
  app.add_flag("--verbose", verbose_, "Progress messages on stderr");
  app.add_flag("--no-timing", no_timing_, "Write 0 for wall-clock fields so outputs are byte-reproducible");
  app.add_option("--json", json_path_, "JSON output path (default: stdout)");
  app.add_option("--csv", csv_path_, "CSV output path");

  auto add_task = [&](CLI::App* sub) {
    sub->add_option("--task", task_, "reg or cls")->check(CLI::IsMember({"reg", "cls"}))->capture_default_str();
  };

  auto* umfi_cmd = app.add_subcommand("umfi", "Ultra marginal feature importance of every feature");
  umfi_cmd->add_option("--input", input_, "CSV with header")->required();
  umfi_cmd->add_option("--response", response_, "Response column name")->required();
  add_task(umfi_cmd);
  umfi_cmd->add_option("--method", method_, "Dependency removal: ot or lr")
      ->check(CLI::IsMember({"ot", "lr"}))
      ->capture_default_str();
  umfi_cmd->add_flag("--no-clamp", no_clamp_, "Keep negative differences in the scores");
  forest_.attach(umfi_cmd);
  removal_.attach(umfi_cmd);

  auto* mci_cmd = app.add_subcommand("mci", "Marginal contribution feature importance");
  mci_cmd->add_option("--input", input_, "CSV with header")->required();
  mci_cmd->add_option("--response", response_, "Response column name")->required();
  add_task(mci_cmd);
  mci_cmd->add_option("--mode", mode_, "exact or k3")->check(CLI::IsMember({"exact", "k3"}))->capture_default_str();
  mci_cmd->add_option("--max-subset-size", max_subset_size_, "Subset size limit for k3 mode")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  forest_.attach(mci_cmd);

  auto* remove_cmd = app.add_subcommand("remove-deps", "Remove dependence on one feature from all others");
  remove_cmd->add_option("--input", input_, "CSV with header")->required();
  remove_cmd->add_option("--protected", protected_, "Feature whose information is removed")->required();
  remove_cmd->add_option("--response", response_, "Column to leave out of the transform and the output");
  remove_cmd->add_option("--method", method_, "ot or lr")->check(CLI::IsMember({"ot", "lr"}))->capture_default_str();
  remove_cmd->add_option("--output", output_, "Transformed feature CSV")->required();
  removal_.attach(remove_cmd);

  auto* diag_cmd = app.add_subcommand("diagnose", "Dependence-removal and distortion diagnostics");
  diag_cmd->add_option("--input", input_, "CSV with header")->required();
  diag_cmd->add_option("--response", response_, "Column to ignore");
  diag_cmd->add_option("--features", features_, "Comma-separated features to audit (default: all)");
  diag_cmd->add_option("--methods", methods_, "Comma-separated removal backends")->capture_default_str();
  forest_.attach(diag_cmd);
  removal_.attach(diag_cmd);

  auto* sim_cmd = app.add_subcommand("simulate", "Run a replicated simulation study");
  sim_cmd->add_option("--design", design_, "corr-int, corr or xor")
      ->required()
      ->check(CLI::IsMember({"corr-int", "corr", "xor"}));
  sim_cmd->add_option("--reps", reps_, "Replications")->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--n", n_, "Observations per replication")
      ->check(CLI::Range(std::size_t{50}, std::numeric_limits<std::size_t>::max()))
      ->capture_default_str();
  sim_cmd->add_option("--methods", sim_methods_, "Comma-separated: mci, mci-k3, umfi-lr, umfi-ot")
      ->capture_default_str();
  sim_cmd->add_option("--csv-points", csv_points_, "Per-replication shares for plotting");
  sim_cmd->add_option("--exact-mci-max-p", exact_mci_max_p_, "Largest p for exact MCI")->capture_default_str();
  forest_.attach(sim_cmd);
  removal_.attach(sim_cmd);

  auto* bench_cmd = app.add_subcommand("benchmark", "Runtime scaling of MCI vs UMFI");
  auto* bench_input = bench_cmd->add_option("--input", input_, "CSV with header");
  bench_cmd->add_option("--response", response_, "Response column name");
  add_task(bench_cmd);
  auto* bench_synth = bench_cmd->add_flag("--synthetic", synthetic_, "Use Gaussian synthetic data");
  bench_input->excludes(bench_synth);
  bench_cmd->add_option("--synthetic-n", synthetic_n_, "Rows of synthetic data")->capture_default_str();
  bench_cmd->add_option("--synthetic-p", synthetic_p_, "Columns of synthetic data")->capture_default_str();
  bench_cmd->add_option("--p-range", p_range_, "Feature counts, e.g. 5..15,50")->capture_default_str();
  bench_cmd->add_option("--mci-max-p", mci_max_p_, "Largest p timed with MCI")->capture_default_str();
  forest_.attach(bench_cmd);

  std::vector<const char*> argv{"umfi"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out_, err_);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out_, err_);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out_, err_);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out_, err_);
    return 1;
  }

  try {
    if (umfi_cmd->parsed()) run_umfi();
    if (mci_cmd->parsed()) run_mci();
    if (remove_cmd->parsed()) run_remove_deps();
    if (diag_cmd->parsed()) run_diagnose();
    if (sim_cmd->parsed()) run_simulate();
    if (bench_cmd->parsed()) run_benchmark_cmd();
  } catch (const UsageError& e) {
    err_ << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const UmfiError& e) {
    err_ << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err_ << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

void Runner::run_umfi() {
  const auto s = seed();
  const Dataset d = load_csv(input_, response_, task());
  log("loaded " + std::to_string(d.n()) + " rows x " + std::to_string(d.p()) + " features");
  EvaluationFunction e(forest_.config(threads_), SeedSpec(s));
  UmfiConfig cfg;
  cfg.backend = removal_.backend(*parse_removal(method_));
  cfg.clamp_negative = !no_clamp_;
  const auto report = umfi(d, e, cfg);
  emit(json_path_, report_to_json(report, !no_timing_));
}

void Runner::run_mci() {
  const auto s = seed();
  const Dataset d = load_csv(input_, response_, task());
  MciConfig cfg;
  cfg.mode = mode_ == "exact" ? MciMode::kExact : MciMode::kSizeLimited;
  cfg.max_subset_size = max_subset_size_;
  if (cfg.mode == MciMode::kExact && d.p() > kMaxExactFeatures) {
    throw UmfiError(ErrorCode::kSubsetBudgetExceeded,
                    "exact MCI on " + std::to_string(d.p()) + " features; use --mode k3");
  }
  log("loaded " + std::to_string(d.n()) + " rows x " + std::to_string(d.p()) + " features");
  EvaluationFunction e(forest_.config(threads_), SeedSpec(s));
  const auto report = mci(d, e, cfg);
  emit(json_path_, report_to_json(report, !no_timing_));
}

void Runner::run_remove_deps() {
  FeatureTable table = parse_feature_table(read_file(input_));
  if (!response_.empty()) {
    auto it = std::find(table.names.begin(), table.names.end(), response_);
    if (it == table.names.end()) throw UmfiError(ErrorCode::kMissingColumn, "response column '" + response_ + "'");
    const auto idx = static_cast<std::size_t>(it - table.names.begin());
    table.values = subset_matrix(table.values, FeatureSubset::all(table.names.size()).without(idx));
    table.names.erase(it);
  }
  auto it = std::find(table.names.begin(), table.names.end(), protected_);
  if (it == table.names.end()) throw UmfiError(ErrorCode::kMissingColumn, "protected column '" + protected_ + "'");
  const auto protected_index = static_cast<std::size_t>(it - table.names.begin());
  std::vector<ResidualModel> models;
  const Matrix s_star = build_s_star(table.values, protected_index, removal_.backend(*parse_removal(method_)), &models);
  std::vector<std::string> names = table.names;
  names.erase(names.begin() + static_cast<std::ptrdiff_t>(protected_index));
  write_file_atomic(output_, matrix_to_csv(s_star, names));
  if (verbose_ && !models.empty()) {
    std::size_t applied = 0;
    for (const auto& m : models) applied += m.applied ? 1 : 0;
    log("residualized " + std::to_string(applied) + " of " + std::to_string(models.size()) + " columns");
  }
  log("wrote " + output_);
}

void Runner::run_diagnose() {
  const auto s = seed();
  FeatureTable table = parse_feature_table(read_file(input_));
  if (!response_.empty()) {
    auto it = std::find(table.names.begin(), table.names.end(), response_);
    if (it == table.names.end()) throw UmfiError(ErrorCode::kMissingColumn, "response column '" + response_ + "'");
    const auto idx = static_cast<std::size_t>(it - table.names.begin());
    table.values = subset_matrix(table.values, FeatureSubset::all(table.names.size()).without(idx));
    table.names.erase(it);
  }
  std::vector<std::size_t> audited;
  if (features_.empty()) {
    for (std::size_t j = 0; j < table.names.size(); ++j) audited.push_back(j);
  } else {
    for (const auto& name : split_list(features_)) {
      auto it = std::find(table.names.begin(), table.names.end(), name);
      if (it == table.names.end()) throw UmfiError(ErrorCode::kMissingColumn, "feature '" + name + "'");
      audited.push_back(static_cast<std::size_t>(it - table.names.begin()));
    }
  }
  std::vector<RemovalKind> backends;
  for (const auto& m : split_list(methods_)) {
    auto kind = parse_removal(m);
    if (!kind) throw UsageError("unknown removal method '" + m + "'");
    backends.push_back(*kind);
  }
  EvaluationFunction e(forest_.config(threads_), SeedSpec(s));
  const auto reports = dependence_removal_report(table.values, table.names, audited, backends, e,
                                                 removal_.backend(RemovalKind::kOptimalTransport));
  emit(json_path_, dependence_reports_to_json(reports, s));
}

void Runner::run_simulate() {
  const auto s = seed();
  std::vector<Method> methods;
  for (const auto& m : split_list(sim_methods_)) {
    auto method = parse_method(m);
    if (!method) throw UsageError("unknown method '" + m + "'");
    methods.push_back(*method);
  }
  if (methods.empty()) throw UsageError("no methods given");
  SimDesign design;
  design.kind = *parse_sim(design_);
  design.n = n_;
  design.replications = reps_;
  StudyOptions options;
  options.forest = forest_.config(1);
  options.removal = removal_.backend(RemovalKind::kOptimalTransport);
  options.threads = threads_;
  options.exact_mci_max_p = exact_mci_max_p_;
  log("running " + std::to_string(reps_) + " replications of " + design_);
  const auto summary = run_study(design, methods, options, SeedSpec(s));
  emit(json_path_, summary_to_json(summary, s));
  if (!csv_points_.empty()) {
    write_file_atomic(csv_points_, summary_points_csv(summary));
    log("wrote " + csv_points_);
  }
}

void Runner::run_benchmark_cmd() {
  const auto s = seed();
  const auto p_range = parse_p_range(p_range_);
  std::optional<Dataset> data;
  if (!input_.empty()) {
    if (response_.empty()) throw UsageError("--response is required with --input");
    data.emplace(load_csv(input_, response_, task()));
  } else {
    data.emplace(synthetic_benchmark_dataset(synthetic_n_, synthetic_p_, SeedSpec(s)));
    log("synthetic data: " + std::to_string(synthetic_n_) + " rows x " + std::to_string(synthetic_p_) + " features");
  }
  BenchmarkOptions options;
  options.forest = forest_.config(threads_);
  options.mci_max_p = mci_max_p_;
  const auto result = run_benchmark(*data, p_range, SeedSpec(s), options);
  emit(json_path_, benchmark_to_json(result, s, !no_timing_));
  if (!csv_path_.empty()) write_file_atomic(csv_path_, benchmark_to_csv(result));
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return Runner(out, err).run(args);
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace umfi
