#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <optional>
#include <vector>

#include "umfi/core_data.hpp"

namespace umfi {

enum class RemovalKind { kLinearRegression, kOptimalTransport };

std::string_view removal_name(RemovalKind kind);
std::optional<RemovalKind> parse_removal(std::string_view name);

struct RemovalBackend {
  RemovalKind kind = RemovalKind::kOptimalTransport;
  // Target rows per conditioning bin of the protected feature (optimal transport).
  std::size_t ot_bin_target = 100;
  // Residualize only when the slope p-value is below this level (linear regression).
  double lr_alpha = 0.01;

  // Throws InvalidArgument when ot_bin_target < 2 or lr_alpha is outside (0, 1).
  void validate() const;
};

// Conditional-quantile transport map of X given Z. The protected feature is cut into
// contiguous rank bins; within a bin each value is mapped to its mid-rank plotting
// position and then through the inverse marginal CDF of X.
struct TransportMap {
  // Bin b covers Z values in (z_bin_edges[b-1], z_bin_edges[b]]; the last edge is max(Z).
  std::vector<double> z_bin_edges;
  // Sorted X values observed in each bin.
  std::vector<std::vector<double>> per_bin_sorted;
  // Sorted full sample of X; its interpolated inverse realizes the target marginal.
  std::vector<double> marginal_sorted;

  static TransportMap fit(std::span<const double> x, std::span<const double> z, std::size_t bin_target);

  std::size_t bin_of(double z) const;
  // Mid-rank conditional CDF value in (0, 1).
  double conditional_cdf(std::size_t bin, double x) const;
  // Inverse marginal CDF with linear interpolation between order statistics.
  double inverse_marginal(double u) const;
  double apply(double x, double z) const { return inverse_marginal(conditional_cdf(bin_of(z), x)); }
};

// Row ranges [start, end) over Z's sorted order, ~bin_target rows each, never splitting a
// run of tied Z values.
std::vector<std::pair<std::size_t, std::size_t>> rank_bins(std::span<const double> sorted_z, std::size_t bin_target);

std::vector<double> ot_remove(std::span<const double> x, std::span<const double> z, const RemovalBackend& cfg);

struct ResidualModel {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_p_value = 1.0;
  bool applied = false;
};

struct LrResult {
  std::vector<double> values;
  ResidualModel model;
};

// OLS of X on Z with a two-sided t-test on the slope (n - 2 degrees of freedom).
LrResult lr_remove(std::span<const double> x, std::span<const double> z, const RemovalBackend& cfg);

// S*: every feature except `protected_index`, each made independent of the protected
// feature by the chosen backend. Column order is preserved. Never reads the response.
Matrix build_s_star(const Dataset& d, std::size_t protected_index, const RemovalBackend& backend,
                    std::vector<ResidualModel>* lr_models = nullptr);
Matrix build_s_star(const Matrix& features, std::size_t protected_index, const RemovalBackend& backend,
                    std::vector<ResidualModel>* lr_models = nullptr);

}  // namespace umfi
