#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Small descriptive-statistics toolbox shared by the removal backends, diagnostics and
// the simulation summaries.
namespace umfi::stats {

double mean(std::span<const double> x);
// Unbiased (n - 1) sample variance / covariance.
double variance(std::span<const double> x);
double covariance(std::span<const double> x, std::span<const double> y);
// 0 when either input is constant.
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

// 1-based ranks with ties replaced by their average rank.
std::vector<double> mid_ranks(std::span<const double> x);

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

// Quantile with linear interpolation between order statistics (type 7).
double quantile(std::span<const double> x, double q);
double quantile_sorted(std::span<const double> sorted, double q);
double median(std::span<const double> x);

}  // namespace umfi::stats
