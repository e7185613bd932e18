#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "umfi/core_data.hpp"
#include "umfi/dependency_removal.hpp"
#include "umfi/evaluator.hpp"

namespace umfi {

enum class MciMode { kExact, kSizeLimited };

struct MciConfig {
  MciMode mode = MciMode::kExact;
  // Largest |S ∪ {f}| considered in SizeLimited mode.
  std::size_t max_subset_size = 3;
  // Subsets evaluated concurrently; 0 = all cores.
  std::size_t threads = 1;
};

inline constexpr std::size_t kMaxExactFeatures = 20;

struct UmfiConfig {
  RemovalBackend backend;
  bool clamp_negative = true;
  // Features processed concurrently; 0 = all cores.
  std::size_t threads = 1;
};

// Memoized nu values keyed by feature subset. Concurrent callers asking for the same
// subset share one computation.
class NuCache {
 public:
  double get(const FeatureSubset& s, const std::function<double()>& compute);
  std::optional<double> find(const FeatureSubset& s) const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<FeatureSubset, std::shared_future<double>> entries_;
};

struct MciResult {
  ImportanceReport report;
  // Maximizing S for each feature: smallest first, then lexicographic.
  std::vector<FeatureSubset> argmax;
};

// Marginal contribution importance: max over S of nu(S ∪ {f}) - nu(S). When a cache is
// passed, subsets already present are reused and not counted as trainings.
MciResult mci_detailed(const Dataset& d, const EvaluationFunction& e, const MciConfig& cfg, NuCache* cache = nullptr);
ImportanceReport mci(const Dataset& d, const EvaluationFunction& e, const MciConfig& cfg, NuCache* cache = nullptr);

// Ultra marginal importance: nu(S* ∪ {f}) - nu(S*) with S* the dependency-removed rest.
ImportanceReport umfi(const Dataset& d, const EvaluationFunction& e, const UmfiConfig& cfg);

// Closed-form model-fit count for a report produced on p features.
std::size_t expected_trainings(Method method, std::size_t p, std::size_t max_subset_size = 3);
bool training_count_audit(const ImportanceReport& report, std::size_t p);

// Calls fn with every r-element combination of `universe` in lexicographic order.
void for_each_combination(std::span<const std::size_t> universe, std::size_t r,
                          const std::function<void(std::span<const std::size_t>)>& fn);

}  // namespace umfi
