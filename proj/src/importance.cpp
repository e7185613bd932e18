#include "umfi/importance.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <unordered_map>

#include "umfi/error.hpp"
#include "umfi/parallel.hpp"

namespace umfi {

double NuCache::get(const FeatureSubset& s, const std::function<double()>& compute) {
  std::promise<double> promise;
  std::shared_future<double> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(s);
    if (it == entries_.end()) {
      future = promise.get_future().share();
      entries_.emplace(s, future);
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(compute());
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

std::optional<double> NuCache::find(const FeatureSubset& s) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(s);
  if (it == entries_.end()) return std::nullopt;
  return it->second.get();
}

std::size_t NuCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void for_each_combination(std::span<const std::size_t> universe, std::size_t r,
                          const std::function<void(std::span<const std::size_t>)>& fn) {
  const std::size_t n = universe.size();
  if (r > n) return;
  std::vector<std::size_t> pos(r);
  for (std::size_t k = 0; k < r; ++k) pos[k] = k;
  std::vector<std::size_t> combo(r);
  for (;;) {
    for (std::size_t k = 0; k < r; ++k) combo[k] = universe[pos[k]];
    fn(combo);
    std::size_t k = r;
    while (k > 0 && pos[k - 1] == n - r + k - 1) --k;
    if (k == 0) return;
    ++pos[k - 1];
    for (std::size_t m = k; m < r; ++m) pos[m] = pos[m - 1] + 1;
  }
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::uint64_t mask_of(std::span<const std::size_t> indices) {
  std::uint64_t m = 0;
  for (auto j : indices) m |= std::uint64_t{1} << j;
  return m;
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

MciResult mci_detailed(const Dataset& d, const EvaluationFunction& e, const MciConfig& cfg, NuCache* cache) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t p = d.p();
  const bool exact = cfg.mode == MciMode::kExact;
  if (exact && p > kMaxExactFeatures) {
    throw UmfiError(ErrorCode::kSubsetBudgetExceeded,
                    "exact MCI needs 2^p fits; p = " + std::to_string(p) + " exceeds " +
                        std::to_string(kMaxExactFeatures));
  }
  if (!exact && cfg.max_subset_size < 1) {
    throw UmfiError(ErrorCode::kInvalidArgument, "max_subset_size must be >= 1");
  }
  if (p > 64) throw UmfiError(ErrorCode::kSubsetBudgetExceeded, "MCI supports at most 64 features");
  const std::size_t max_size = exact ? p : std::min(cfg.max_subset_size, p);

  NuCache local_cache;
  NuCache& memo = cache ? *cache : local_cache;
  std::atomic<std::size_t> fits{0};

  std::vector<FeatureSubset> todo;
  const auto all = FeatureSubset::all(p);
  for (std::size_t r = 1; r <= max_size; ++r) {
    for_each_combination(all.indices(), r, [&](std::span<const std::size_t> c) {
      todo.emplace_back(std::vector<std::size_t>(c.begin(), c.end()));
    });
  }
  std::vector<double> values(todo.size());
  parallel_for(todo.size(), cfg.threads, [&](std::size_t k) {
    values[k] = memo.get(todo[k], [&] {
      fits.fetch_add(1);
      return e.nu(subset_matrix(d, todo[k]), d.response());
    });
  });
  std::unordered_map<std::uint64_t, double> nu_of;
  nu_of.reserve(todo.size() + 1);
  nu_of[0] = 0.0;
  for (std::size_t k = 0; k < todo.size(); ++k) nu_of[mask_of(todo[k].indices())] = values[k];

  MciResult result;
  auto& report = result.report;
  report.method = exact ? Method::kMciExact : Method::kMciK3;
  report.feature_names = d.feature_names();
  report.scores.assign(p, 0.0);
  report.raw_scores.assign(p, 0.0);
  result.argmax.resize(p);
  for (std::size_t f = 0; f < p; ++f) {
    const auto others = all.without(f);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_set;
    for (std::size_t r = 0; r + 1 <= max_size; ++r) {
      for_each_combination(others.indices(), r, [&](std::span<const std::size_t> s) {
        const std::uint64_t m = mask_of(s);
        const double gain = nu_of.at(m | (std::uint64_t{1} << f)) - nu_of.at(m);
        if (gain > best) {
          best = gain;
          best_set.assign(s.begin(), s.end());
        }
      });
    }
    report.raw_scores[f] = best;
    report.scores[f] = std::max(best, 0.0);
    result.argmax[f] = FeatureSubset(std::move(best_set));
  }
  report.trainings = fits.load();
  report.seed = e.seed().master();
  report.metadata["mci_mode"] = exact ? "exact" : "size_limited";
  report.metadata["max_subset_size"] = std::to_string(max_size);
  report.metadata["feature_scaling"] = "none";
  report.wall_time_s = seconds_since(start);
  return result;
}

ImportanceReport mci(const Dataset& d, const EvaluationFunction& e, const MciConfig& cfg, NuCache* cache) {
  return mci_detailed(d, e, cfg, cache).report;
}

ImportanceReport umfi(const Dataset& d, const EvaluationFunction& e, const UmfiConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.backend.validate();
  const std::size_t p = d.p();
  std::vector<double> raw(p, 0.0);
  std::vector<std::size_t> fits(p, 0);
  parallel_for(p, cfg.threads, [&](std::size_t f) {
    Matrix s_star = build_s_star(d, f, cfg.backend);
    const double without = e.nu(s_star, d.response());
    if (s_star.cols() > 0) ++fits[f];
    s_star.append_column(d.features().column(f));
    const double with = e.nu(s_star, d.response());
    ++fits[f];
    raw[f] = with - without;
  });

  ImportanceReport report;
  report.method = cfg.backend.kind == RemovalKind::kOptimalTransport ? Method::kUmfiOt : Method::kUmfiLr;
  report.feature_names = d.feature_names();
  report.raw_scores = raw;
  report.scores = raw;
  if (cfg.clamp_negative) {
    for (auto& s : report.scores) s = std::max(s, 0.0);
  }
  for (auto f : fits) report.trainings += f;
  report.seed = e.seed().master();
  report.metadata["backend"] = std::string(removal_name(cfg.backend.kind));
  if (cfg.backend.kind == RemovalKind::kOptimalTransport) {
    report.metadata["ot_bin_target"] = std::to_string(cfg.backend.ot_bin_target);
  } else {
    report.metadata["lr_alpha"] = std::to_string(cfg.backend.lr_alpha);
  }
  report.metadata["clamp_negative"] = cfg.clamp_negative ? "true" : "false";
  report.metadata["feature_scaling"] = "none";
  report.wall_time_s = seconds_since(start);
  return report;
}

std::size_t expected_trainings(Method method, std::size_t p, std::size_t max_subset_size) {
  switch (method) {
    case Method::kUmfiLr:
    case Method::kUmfiOt:
      // With a single feature S* is empty and nu(S*) = 0 needs no fit.
      return p == 1 ? 1 : 2 * p;
    case Method::kMciExact:
      return static_cast<std::size_t>((std::uint64_t{1} << p) - 1);
    case Method::kMciK3: {
      std::uint64_t total = 0;
      for (std::size_t r = 1; r <= std::min(max_subset_size, p); ++r) total += binomial(p, r);
      return static_cast<std::size_t>(total);
    }
  }
  return 0;
}

bool training_count_audit(const ImportanceReport& report, std::size_t p) {
  std::size_t k = 3;
  if (auto it = report.metadata.find("max_subset_size"); it != report.metadata.end()) {
    k = static_cast<std::size_t>(std::stoul(it->second));
  }
  return report.trainings == expected_trainings(report.method, p, k);
}

}  // namespace umfi
