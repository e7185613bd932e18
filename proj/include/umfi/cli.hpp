#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "umfi/core_data.hpp"
#include "umfi/evaluator.hpp"
#include "umfi/random.hpp"

namespace umfi {

struct BenchmarkPoint {
  std::size_t p = 0;
  std::vector<std::string> features;
  bool mci_run = false;
  double wall_time_mci = 0.0;
  double wall_time_umfi = 0.0;
  std::size_t trainings_mci = 0;
  std::size_t trainings_umfi = 0;
};

struct BenchmarkResult {
  std::vector<BenchmarkPoint> points;
};

struct BenchmarkOptions {
  ForestConfig forest;
  // MCI (exact) is timed only up to this many features.
  std::size_t mci_max_p = 15;
  std::size_t ot_bin_target = 100;
};

// For each p: a seeded random subset of p columns, timed through exact MCI (when
// p <= mci_max_p) and UMFI with optimal transport.
BenchmarkResult run_benchmark(const Dataset& input, std::span<const std::size_t> p_range, SeedSpec seed,
                              const BenchmarkOptions& options = {});

// Gaussian features with a binary label driven by the first few columns.
Dataset synthetic_benchmark_dataset(std::size_t n, std::size_t p, SeedSpec seed);

std::string benchmark_to_json(const BenchmarkResult& r, std::uint64_t seed, bool include_timing = true);
std::string benchmark_to_csv(const BenchmarkResult& r);

// Exit codes: 0 success, 1 usage error, 2 data or validation error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace umfi
