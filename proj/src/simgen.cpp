#include "umfi/simgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "json.hpp"

#include "umfi/error.hpp"
#include "umfi/importance.hpp"
#include "umfi/parallel.hpp"
#include "umfi/stats.hpp"

namespace umfi {

std::string_view sim_name(SimKind kind) {
  switch (kind) {
    case SimKind::kCorrelatedInteraction: return "corr-int";
    case SimKind::kCorrelation: return "corr";
    case SimKind::kNonlinearXor: return "xor";
  }
  return "unknown";
}

std::optional<SimKind> parse_sim(std::string_view name) {
  if (name == "corr-int") return SimKind::kCorrelatedInteraction;
  if (name == "corr") return SimKind::kCorrelation;
  if (name == "xor") return SimKind::kNonlinearXor;
  return std::nullopt;
}

void SimDesign::validate() const {
  if (n < 50) throw UmfiError(ErrorCode::kInvalidArgument, "simulation needs n >= 50");
  if (replications < 1) throw UmfiError(ErrorCode::kInvalidArgument, "replications must be >= 1");
  if (!(correlation_noise_sd >= 0.0)) throw UmfiError(ErrorCode::kInvalidArgument, "noise sd must be >= 0");
  if (!(xor_noise_rate > 0.0)) throw UmfiError(ErrorCode::kInvalidArgument, "noise rate must be > 0");
}

namespace {
double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace

Dataset generate(const SimDesign& design, std::size_t replication_index, SeedSpec seed) {
  design.validate();
  Rng rng(seed.derive(StreamKind::kReplication, replication_index)
              .derive(StreamKind::kSynthetic, static_cast<std::uint64_t>(design.kind)));
  const std::size_t n = design.n;
  std::vector<std::vector<double>> x(4, std::vector<double>(n));
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (design.kind) {
      case SimKind::kCorrelatedInteraction: {
        const double a = rng.normal(), b = rng.normal(), c = rng.normal();
        const double d = rng.normal(), e = rng.normal(), g = rng.normal();
        x[0][i] = a + b;
        x[1][i] = b + c;
        x[2][i] = d + e;
        x[3][i] = e + g;
        y[i] = x[0][i] + x[1][i] + sign(x[0][i] * x[1][i]) + x[2][i] + x[3][i];
        break;
      }
      case SimKind::kCorrelation: {
        x[0][i] = rng.normal();
        x[1][i] = rng.normal();
        x[3][i] = rng.normal();
        x[2][i] = x[0][i] + rng.normal(0.0, design.correlation_noise_sd);
        y[i] = x[0][i] + x[1][i];
        break;
      }
      case SimKind::kNonlinearXor: {
        for (auto& col : x) col[i] = rng.normal();
        y[i] = sign(x[0][i] * x[1][i]) * rng.exponential(design.xor_noise_rate);
        break;
      }
    }
  }
  return Dataset(Matrix::from_columns(n, x), {"x1", "x2", "x3", "x4"}, Response::regression(std::move(y)), "y");
}

BoxStats box_stats(std::span<const double> values) {
  if (values.empty()) throw UmfiError(ErrorCode::kInvalidArgument, "box_stats of empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  BoxStats b;
  b.q1 = stats::quantile_sorted(sorted, 0.25);
  b.median = stats::quantile_sorted(sorted, 0.5);
  b.q3 = stats::quantile_sorted(sorted, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo = b.q1 - 1.5 * iqr, hi = b.q3 + 1.5 * iqr;
  b.lower_whisker = b.q1;
  b.upper_whisker = b.q3;
  for (double v : sorted) {
    if (v < lo || v > hi) {
      b.outliers.push_back(v);
    } else {
      b.lower_whisker = std::min(b.lower_whisker, v);
      b.upper_whisker = std::max(b.upper_whisker, v);
    }
  }
  return b;
}

const BoxStats& ReplicationSummary::at(Method m, std::string_view feature) const {
  const auto mi = std::find(methods.begin(), methods.end(), m);
  const auto fi = std::find(feature_names.begin(), feature_names.end(), feature);
  if (mi == methods.end() || fi == feature_names.end()) {
    throw UmfiError(ErrorCode::kInvalidArgument, "method or feature not in summary");
  }
  return stats[static_cast<std::size_t>(mi - methods.begin())][static_cast<std::size_t>(fi - feature_names.begin())];
}

ImportanceReport run_method(const Dataset& d, Method method, const ForestConfig& forest,
                            const RemovalBackend& removal, SeedSpec seed, std::size_t exact_mci_max_p) {
  EvaluationFunction e(forest, seed);
  switch (method) {
    case Method::kMciExact:
    case Method::kMciK3: {
      MciConfig cfg;
      cfg.mode = method == Method::kMciExact && d.p() <= exact_mci_max_p ? MciMode::kExact : MciMode::kSizeLimited;
      return mci(d, e, cfg);
    }
    case Method::kUmfiLr:
    case Method::kUmfiOt: {
      UmfiConfig cfg;
      cfg.backend = removal;
      cfg.backend.kind = method == Method::kUmfiLr ? RemovalKind::kLinearRegression : RemovalKind::kOptimalTransport;
      return umfi(d, e, cfg);
    }
  }
  throw UmfiError(ErrorCode::kInvalidArgument, "unknown method");
}

ReplicationSummary run_study(const SimDesign& design, std::span<const Method> methods, const StudyOptions& options,
                             SeedSpec seed) {
  design.validate();
  if (methods.empty()) throw UmfiError(ErrorCode::kInvalidArgument, "no methods requested");
  ReplicationSummary summary;
  summary.design = design;
  summary.methods.assign(methods.begin(), methods.end());
  summary.feature_names = {"x1", "x2", "x3", "x4"};
  summary.mci_mode = 4 <= options.exact_mci_max_p ? "exact" : "size_limited";

  ForestConfig forest = options.forest;
  forest.threads = 1;  // parallelism lives at the replication level here
  const std::size_t reps = design.replications;
  const std::size_t nm = methods.size();
  std::vector<ImportanceReport> reports(reps * nm);
  parallel_for(reps * nm, options.threads, [&](std::size_t job) {
    const std::size_t r = job / nm, m = job % nm;
    const Dataset d = generate(design, r, seed);
    reports[job] = run_method(d, methods[m], forest, options.removal, seed, options.exact_mci_max_p);
  });

  summary.stats.assign(nm, std::vector<BoxStats>(4));
  for (std::size_t m = 0; m < nm; ++m) {
    std::vector<std::vector<double>> shares(4);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& report = reports[r * nm + m];
      const auto s = report.shares();
      for (std::size_t f = 0; f < 4; ++f) {
        shares[f].push_back(s[f]);
        summary.points.push_back({r, methods[m], summary.feature_names[f], s[f], report.scores[f]});
      }
    }
    for (std::size_t f = 0; f < 4; ++f) summary.stats[m][f] = box_stats(shares[f]);
  }
  std::stable_sort(summary.points.begin(), summary.points.end(),
                   [](const SharePoint& a, const SharePoint& b) { return a.replication < b.replication; });
  return summary;
}

std::string summary_to_json(const ReplicationSummary& s, std::uint64_t seed) {
  nlohmann::ordered_json out;
  out["design"] = sim_name(s.design.kind);
  out["n"] = s.design.n;
  out["replications"] = s.design.replications;
  out["seed"] = seed;
  out["mci_mode"] = s.mci_mode;
  out["methods"] = nlohmann::ordered_json::object();
  for (std::size_t m = 0; m < s.methods.size(); ++m) {
    nlohmann::ordered_json per_feature = nlohmann::ordered_json::object();
    for (std::size_t f = 0; f < s.feature_names.size(); ++f) {
      const auto& b = s.stats[m][f];
      per_feature[s.feature_names[f]] = {
          {"median", b.median},       {"q1", b.q1},
          {"q3", b.q3},               {"lower_whisker", b.lower_whisker},
          {"upper_whisker", b.upper_whisker}, {"outliers", b.outliers},
      };
    }
    out["methods"][std::string(method_name(s.methods[m]))] = std::move(per_feature);
  }
  return out.dump(2) + "\n";
}

std::string summary_points_csv(const ReplicationSummary& s) {
  std::string out = "replication,method,feature,share\n";
  char buf[64];
  for (const auto& p : s.points) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), p.share);
    out += std::to_string(p.replication) + "," + std::string(method_name(p.method)) + "," + p.feature + "," +
           std::string(buf, ptr) + "\n";
  }
  return out;
}

}  // namespace umfi
