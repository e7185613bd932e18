#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "umfi/core_data.hpp"
#include "umfi/dependency_removal.hpp"
#include "umfi/evaluator.hpp"
#include "umfi/random.hpp"

namespace umfi {

enum class SimKind {
  kCorrelatedInteraction,  // x1=A+B, x2=B+C, x3=D+E, x4=E+G; y = x1+x2+sign(x1 x2)+x3+x4
  kCorrelation,            // x1,x2,x4 ~ N(0,1), x3 = x1 + N(0, 0.2); y = x1 + x2
  kNonlinearXor,           // x1..x4 ~ N(0,1); y = sign(x1 x2) * Exp(rate)
};

std::string_view sim_name(SimKind kind);
std::optional<SimKind> parse_sim(std::string_view name);

struct SimDesign {
  SimKind kind = SimKind::kCorrelatedInteraction;
  std::size_t n = 500;
  std::size_t replications = 100;
  // Standard deviation of the x3 noise term in the correlation design.
  double correlation_noise_sd = 0.2;
  // Rate of the exponential noise in the xor design (mean = 1 / rate).
  double xor_noise_rate = 0.7071067811865476;

  void validate() const;
};

// Replication r's data depends only on (kind, r, seed).
Dataset generate(const SimDesign& design, std::size_t replication_index, SeedSpec seed);

struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double lower_whisker = 0.0;
  double upper_whisker = 0.0;
  std::vector<double> outliers;
};

// Tukey box-plot summary: type-7 quartiles, outliers beyond 1.5 IQR.
BoxStats box_stats(std::span<const double> values);

struct SharePoint {
  std::size_t replication = 0;
  Method method = Method::kUmfiOt;
  std::string feature;
  double share = 0.0;
  double score = 0.0;
};

struct ReplicationSummary {
  SimDesign design;
  std::vector<Method> methods;
  std::vector<std::string> feature_names;
  // stats[m][f] summarizes the share of feature f under method m.
  std::vector<std::vector<BoxStats>> stats;
  std::vector<SharePoint> points;
  // MCI mode actually used ("exact" or "size_limited").
  std::string mci_mode;

  const BoxStats& at(Method m, std::string_view feature) const;
  double median_share(Method m, std::string_view feature) const { return at(m, feature).median; }
};

struct StudyOptions {
  ForestConfig forest;
  RemovalBackend removal;
  // Replications run concurrently; 0 = all cores.
  std::size_t threads = 1;
  // MCI runs in exact mode up to this many features, size-limited (3) above.
  std::size_t exact_mci_max_p = 10;
};

// Runs every method on every replication and summarizes the shares.
ReplicationSummary run_study(const SimDesign& design, std::span<const Method> methods, const StudyOptions& options,
                             SeedSpec seed);

// Runs one method on one dataset the way run_study does.
ImportanceReport run_method(const Dataset& d, Method method, const ForestConfig& forest,
                            const RemovalBackend& removal, SeedSpec seed, std::size_t exact_mci_max_p = 10);

std::string summary_to_json(const ReplicationSummary& s, std::uint64_t seed);
std::string summary_points_csv(const ReplicationSummary& s);

}  // namespace umfi
