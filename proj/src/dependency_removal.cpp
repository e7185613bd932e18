#include "umfi/dependency_removal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "umfi/error.hpp"

namespace umfi {

std::string_view removal_name(RemovalKind kind) {
  return kind == RemovalKind::kLinearRegression ? "lr" : "ot";
}

std::optional<RemovalKind> parse_removal(std::string_view name) {
  if (name == "lr" || name == "linear-regression") return RemovalKind::kLinearRegression;
  if (name == "ot" || name == "optimal-transport") return RemovalKind::kOptimalTransport;
  return std::nullopt;
}

void RemovalBackend::validate() const {
  if (ot_bin_target < 2) throw UmfiError(ErrorCode::kInvalidArgument, "OT bin size must be >= 2");
  if (!(lr_alpha > 0.0 && lr_alpha < 1.0)) throw UmfiError(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
}

// ---------------------------------------------------------------------------
// Optimal transport

std::vector<std::pair<std::size_t, std::size_t>> rank_bins(std::span<const double> sorted_z, std::size_t bin_target) {
  const std::size_t n = sorted_z.size();
  if (n == 0) return {};
  const std::size_t k = std::max<std::size_t>(1, n / std::max<std::size_t>(bin_target, 1));
  const std::size_t base = n / k;
  const std::size_t extra = n % k;

  std::vector<std::pair<std::size_t, std::size_t>> bins;
  std::size_t start = 0;
  std::size_t nominal_end = 0;
  for (std::size_t b = 0; b < k && start < n; ++b) {
    nominal_end += base + (b < extra ? 1 : 0);
    std::size_t end = std::max(nominal_end, start + 1);
    // A run of tied Z values belongs to a single bin.
    while (end < n && sorted_z[end] == sorted_z[end - 1]) ++end;
    if (b + 1 == k) end = n;
    bins.emplace_back(start, end);
    start = end;
  }
  // Bins need at least two rows for a usable conditional CDF; fold small ones leftwards.
  std::vector<std::pair<std::size_t, std::size_t>> merged;
  for (const auto& bin : bins) {
    if (!merged.empty() && bin.second - bin.first < 2) {
      merged.back().second = bin.second;
    } else {
      merged.push_back(bin);
    }
  }
  if (merged.size() > 1 && merged.front().second - merged.front().first < 2) {
    merged[1].first = merged[0].first;
    merged.erase(merged.begin());
  }
  return merged;
}

TransportMap TransportMap::fit(std::span<const double> x, std::span<const double> z, std::size_t bin_target) {
  if (x.size() != z.size()) throw UmfiError(ErrorCode::kLengthMismatch, "X and Z lengths differ");
  if (x.size() < 2) throw UmfiError(ErrorCode::kTooFewPoints, "optimal transport needs at least 2 rows");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z[a] < z[b]; });
  std::vector<double> sorted_z(n);
  for (std::size_t k = 0; k < n; ++k) sorted_z[k] = z[order[k]];

  TransportMap map;
  for (const auto& [start, end] : rank_bins(sorted_z, bin_target)) {
    map.z_bin_edges.push_back(sorted_z[end - 1]);
    std::vector<double> xs;
    xs.reserve(end - start);
    for (std::size_t k = start; k < end; ++k) xs.push_back(x[order[k]]);
    std::sort(xs.begin(), xs.end());
    map.per_bin_sorted.push_back(std::move(xs));
  }
  map.marginal_sorted.assign(x.begin(), x.end());
  std::sort(map.marginal_sorted.begin(), map.marginal_sorted.end());
  return map;
}

std::size_t TransportMap::bin_of(double z) const {
  const auto it = std::lower_bound(z_bin_edges.begin(), z_bin_edges.end(), z);
  if (it == z_bin_edges.end()) return z_bin_edges.size() - 1;
  return static_cast<std::size_t>(it - z_bin_edges.begin());
}

double TransportMap::conditional_cdf(std::size_t bin, double x) const {
  const auto& xs = per_bin_sorted.at(bin);
  const auto lo = std::lower_bound(xs.begin(), xs.end(), x);
  const auto hi = std::upper_bound(lo, xs.end(), x);
  const double below = static_cast<double>(lo - xs.begin());
  const double ties = static_cast<double>(hi - lo);
  // (mid-rank - 0.5) / count, with mid-rank = below + (ties + 1) / 2.
  return (below + 0.5 * ties) / static_cast<double>(xs.size());
}

double TransportMap::inverse_marginal(double u) const {
  const std::size_t n = marginal_sorted.size();
  double pos = std::clamp(u * static_cast<double>(n) - 0.5, 0.0, static_cast<double>(n - 1));
  // Snap rounding noise so that grid points map exactly onto order statistics.
  if (std::abs(pos - std::round(pos)) < 1e-9) pos = std::round(pos);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return marginal_sorted[lo] + frac * (marginal_sorted[hi] - marginal_sorted[lo]);
}

std::vector<double> ot_remove(std::span<const double> x, std::span<const double> z, const RemovalBackend& cfg) {
  cfg.validate();
  const auto map = TransportMap::fit(x, z, cfg.ot_bin_target);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = map.apply(x[i], z[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Linear regression

LrResult lr_remove(std::span<const double> x, std::span<const double> z, const RemovalBackend& cfg) {
  cfg.validate();
  if (x.size() != z.size()) throw UmfiError(ErrorCode::kLengthMismatch, "X and Z lengths differ");
  const std::size_t n = x.size();
  if (n < 3) throw UmfiError(ErrorCode::kTooFewPoints, "linear regression needs at least 3 rows");

  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double mz = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(n);
  double szz = 0.0, sxz = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    szz += (z[i] - mz) * (z[i] - mz);
    sxz += (x[i] - mx) * (z[i] - mz);
  }

  LrResult result;
  result.values.assign(x.begin(), x.end());
  if (!(szz > 0.0)) {
    result.model.intercept = mx;
    return result;
  }

  const double slope = sxz / szz;
  std::vector<double> residuals(n);
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    residuals[i] = (x[i] - mx) - slope * (z[i] - mz);
    sse += residuals[i] * residuals[i];
  }
  const double dof = static_cast<double>(n - 2);
  const double se = std::sqrt(sse / dof / szz);
  double p_value;
  if (se > 0.0) {
    const double t = std::abs(slope / se);
    boost::math::students_t dist(dof);
    p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
  } else {
    p_value = slope != 0.0 ? 0.0 : 1.0;
  }

  result.model.intercept = mx - slope * mz;
  result.model.slope = slope;
  result.model.slope_p_value = p_value;
  if (p_value < cfg.lr_alpha) {
    result.model.applied = true;
    result.values = std::move(residuals);
  }
  return result;
}

// ---------------------------------------------------------------------------
// S*

Matrix build_s_star(const Matrix& features, std::size_t protected_index, const RemovalBackend& backend,
                    std::vector<ResidualModel>* lr_models) {
  if (protected_index >= features.cols()) {
    throw UmfiError(ErrorCode::kIndexOutOfRange, "protected feature index " + std::to_string(protected_index));
  }
  backend.validate();
  const auto z = features.column(protected_index);
  Matrix out(features.rows(), 0);
  if (lr_models) lr_models->clear();
  for (std::size_t j = 0; j < features.cols(); ++j) {
    if (j == protected_index) continue;
    if (backend.kind == RemovalKind::kOptimalTransport) {
      out.append_column(ot_remove(features.column(j), z, backend));
    } else {
      auto r = lr_remove(features.column(j), z, backend);
      if (lr_models) lr_models->push_back(r.model);
      out.append_column(r.values);
    }
  }
  return out;
}

Matrix build_s_star(const Dataset& d, std::size_t protected_index, const RemovalBackend& backend,
                    std::vector<ResidualModel>* lr_models) {
  return build_s_star(d.features(), protected_index, backend, lr_models);
}

}  // namespace umfi
