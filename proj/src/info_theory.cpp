#include "umfi/info_theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "umfi/error.hpp"
#include "umfi/parallel.hpp"

namespace umfi {

DiscreteJoint::DiscreteJoint(std::vector<std::size_t> dims, std::vector<double> probabilities)
    : dims_(std::move(dims)), probs_(std::move(probabilities)) {
  if (dims_.empty()) throw UmfiError(ErrorCode::kInvalidArgument, "joint needs at least one variable");
  std::size_t cells = 1;
  for (auto d : dims_) {
    if (d == 0) throw UmfiError(ErrorCode::kInvalidArgument, "alphabet size must be positive");
    cells *= d;
  }
  if (probs_.size() != cells) throw UmfiError(ErrorCode::kLengthMismatch, "probability table size != product of dims");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw UmfiError(ErrorCode::kInvalidArgument, "negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw UmfiError(ErrorCode::kInvalidArgument, "probabilities must sum to 1");
}

std::vector<std::size_t> DiscreteJoint::unravel(std::size_t cell) const {
  std::vector<std::size_t> idx(dims_.size());
  for (std::size_t v = dims_.size(); v-- > 0;) {
    idx[v] = cell % dims_[v];
    cell /= dims_[v];
  }
  return idx;
}

std::vector<double> DiscreteJoint::marginal(std::span<const std::size_t> vars) const {
  std::size_t cells = 1;
  for (auto v : vars) {
    if (v >= dims_.size()) throw UmfiError(ErrorCode::kIndexOutOfRange, "variable index out of range");
    cells *= dims_[v];
  }
  std::vector<double> out(cells, 0.0);
  for (std::size_t cell = 0; cell < probs_.size(); ++cell) {
    if (probs_[cell] == 0.0) continue;
    const auto idx = unravel(cell);
    std::size_t flat = 0;
    for (auto v : vars) flat = flat * dims_[v] + idx[v];
    out[flat] += probs_[cell];
  }
  return out;
}

namespace {

void require_disjoint(std::initializer_list<std::span<const std::size_t>> groups) {
  std::vector<std::size_t> all;
  for (auto g : groups) all.insert(all.end(), g.begin(), g.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw UmfiError(ErrorCode::kOverlappingGroups, "variable groups must be disjoint");
  }
}

std::vector<std::size_t> concat(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::size_t cells_of(const DiscreteJoint& j, std::span<const std::size_t> vars) {
  std::size_t c = 1;
  for (auto v : vars) c *= j.dims()[v];
  return c;
}

}  // namespace

double entropy(const DiscreteJoint& j, std::span<const std::size_t> vars) {
  if (vars.empty()) return 0.0;
  require_disjoint({vars});
  double h = 0.0;
  for (double p : j.marginal(vars)) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

double mutual_information(const DiscreteJoint& j, std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.empty() || b.empty()) throw UmfiError(ErrorCode::kInvalidArgument, "groups must be nonempty");
  require_disjoint({a, b});
  const auto pab = j.marginal(concat(a, b));
  const auto pa = j.marginal(a);
  const auto pb = j.marginal(b);
  const std::size_t nb = cells_of(j, b);
  double mi = 0.0;
  for (std::size_t ia = 0; ia < pa.size(); ++ia) {
    for (std::size_t ib = 0; ib < nb; ++ib) {
      const double p = pab[ia * nb + ib];
      if (p > 0.0) mi += p * std::log2(p / (pa[ia] * pb[ib]));
    }
  }
  return mi;
}

double conditional_mutual_information(const DiscreteJoint& j, std::span<const std::size_t> a,
                                      std::span<const std::size_t> b, std::span<const std::size_t> c) {
  if (c.empty()) return mutual_information(j, a, b);
  if (a.empty() || b.empty()) throw UmfiError(ErrorCode::kInvalidArgument, "groups must be nonempty");
  require_disjoint({a, b, c});
  // Direct sum of p(a,b,c) log[p(a,b,c) p(c) / (p(a,c) p(b,c))], tables ordered (A, B, C).
  const auto pabc = j.marginal(concat(concat(a, b), c));
  const auto pac = j.marginal(concat(a, c));
  const auto pbc = j.marginal(concat(b, c));
  const auto pc = j.marginal(c);
  const std::size_t na = cells_of(j, a), nb = cells_of(j, b), nc = cells_of(j, c);
  double mi = 0.0;
  for (std::size_t ia = 0; ia < na; ++ia) {
    for (std::size_t ib = 0; ib < nb; ++ib) {
      for (std::size_t ic = 0; ic < nc; ++ic) {
        const double p = pabc[(ia * nb + ib) * nc + ic];
        if (p > 0.0) mi += p * std::log2(p * pc[ic] / (pac[ia * nc + ic] * pbc[ib * nc + ic]));
      }
    }
  }
  return mi;
}

DiscreteJoint random_independent_context_joint(std::size_t alphabet, Rng& rng) {
  if (alphabet < 2) throw UmfiError(ErrorCode::kInvalidArgument, "alphabet must be >= 2");
  auto random_simplex = [&](std::size_t k) {
    std::vector<double> w(k);
    double total = 0.0;
    for (auto& v : w) {
      v = rng.exponential(1.0);  // flat Dirichlet
      total += v;
    }
    for (auto& v : w) v /= total;
    return w;
  };
  const std::size_t a = alphabet;
  const auto ps = random_simplex(a);
  const auto pf = random_simplex(a);
  const auto px = random_simplex(a);
  std::vector<double> probs(a * a * a * a);
  for (std::size_t s = 0; s < a; ++s) {
    for (std::size_t f = 0; f < a; ++f) {
      for (std::size_t x = 0; x < a; ++x) {
        const auto py = random_simplex(a);
        for (std::size_t y = 0; y < a; ++y) {
          probs[((s * a + f) * a + x) * a + y] = ps[s] * pf[f] * px[x] * py[y];
        }
      }
    }
  }
  // Renormalize away accumulated rounding so the table passes the sum-to-one check.
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (auto& p : probs) p /= total;
  return DiscreteJoint({a, a, a, a}, std::move(probs));
}

SupermodularityCheck check_supermodularity(const DiscreteJoint& j) {
  if (j.num_variables() != 4) throw UmfiError(ErrorCode::kInvalidArgument, "expected variables (S, f, X, Y)");
  const std::size_t y[] = {3};
  const std::size_t s[] = {0};
  const std::size_t sf[] = {0, 1};
  const std::size_t sx[] = {0, 2};
  const std::size_t sfx[] = {0, 1, 2};
  SupermodularityCheck c;
  c.gain_with_context = mutual_information(j, y, sfx) - mutual_information(j, y, sx);
  c.gain_without_context = mutual_information(j, y, sf) - mutual_information(j, y, s);
  return c;
}

double verify_supermodularity(std::size_t trials, std::size_t alphabet, SeedSpec seed) {
  if (trials < 1) throw UmfiError(ErrorCode::kInvalidArgument, "trials must be >= 1");
  if (alphabet < 2 || alphabet > 4) throw UmfiError(ErrorCode::kInvalidArgument, "alphabet must be in 2..4");
  std::size_t violations = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed.derive(StreamKind::kTrial, t));
    if (!check_supermodularity(random_independent_context_joint(alphabet, rng)).holds(1e-9)) ++violations;
  }
  return static_cast<double>(violations) / static_cast<double>(trials);
}

namespace {

// Equal-frequency bin of each point: floor(#{values < v} * bins / n), so ties share a bin.
std::vector<std::size_t> equal_frequency_bins(std::span<const double> v, std::size_t bins) {
  const std::size_t n = v.size();
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto below = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v[i]) - sorted.begin());
    out[i] = std::min(bins - 1, below * bins / n);
  }
  return out;
}

}  // namespace

double mic_approx(std::span<const double> x, std::span<const double> y, std::size_t grid_budget) {
  if (x.size() != y.size()) throw UmfiError(ErrorCode::kLengthMismatch, "x and y lengths differ");
  const std::size_t n = x.size();
  if (n < 20) throw UmfiError(ErrorCode::kTooFewPoints, "mic_approx needs at least 20 points");
  if (grid_budget == 0) grid_budget = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), 0.6)));
  grid_budget = std::max<std::size_t>(grid_budget, 4);

  double best = 0.0;
  std::vector<std::size_t> counts;
  for (std::size_t a = 2; 2 * a <= grid_budget; ++a) {
    const auto bx = equal_frequency_bins(x, a);
    std::vector<std::size_t> count_x(a, 0);
    for (auto b : bx) ++count_x[b];
    for (std::size_t b = 2; a * b <= grid_budget; ++b) {
      const auto by = equal_frequency_bins(y, b);
      counts.assign(a * b, 0);
      std::vector<std::size_t> count_y(b, 0);
      for (std::size_t i = 0; i < n; ++i) {
        ++counts[bx[i] * b + by[i]];
        ++count_y[by[i]];
      }
      double mi = 0.0;
      const double dn = static_cast<double>(n);
      for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t k = 0; k < b; ++k) {
          const auto c = counts[i * b + k];
          if (c == 0) continue;
          const double pxy = static_cast<double>(c) / dn;
          mi += pxy * std::log2(pxy * dn * dn / (static_cast<double>(count_x[i]) * static_cast<double>(count_y[k])));
        }
      }
      best = std::max(best, mi / std::log2(static_cast<double>(std::min(a, b))));
    }
  }
  return std::clamp(best, 0.0, 1.0);
}

std::vector<DependenceReport> dependence_removal_report(const Matrix& features, std::span<const std::string> names,
                                                        std::span<const std::size_t> audited,
                                                        std::span<const RemovalKind> backends,
                                                        const EvaluationFunction& e,
                                                        const RemovalBackend& settings, std::size_t threads) {
  const std::size_t p = features.cols();
  if (names.size() != p) throw UmfiError(ErrorCode::kLengthMismatch, "names size != feature count");
  if (p < 2) throw UmfiError(ErrorCode::kInvalidArgument, "need at least 2 features to audit dependence");
  for (auto i : audited) {
    if (i >= p) throw UmfiError(ErrorCode::kIndexOutOfRange, "audited feature index " + std::to_string(i));
  }
  std::vector<DependenceReport> reports(audited.size());
  parallel_for(audited.size(), threads, [&](std::size_t k) {
    const std::size_t i = audited[k];
    auto& r = reports[k];
    r.protected_feature = names[i];
    const auto column = features.column(i);
    const Response target = Response::regression(std::vector<double>(column.begin(), column.end()));
    const Matrix raw = subset_matrix(features, FeatureSubset::all(p).without(i));
    r.predictability_raw_unclamped = e.raw_score(raw, target);
    r.predictability_raw = std::clamp(r.predictability_raw_unclamped, 0.0, 1.0);

    for (auto kind : backends) {
      RemovalBackend backend = settings;
      backend.kind = kind;
      const Matrix transformed = build_s_star(features, i, backend);
      const double score = e.raw_score(transformed, target);
      std::map<std::string, double> distortion;
      std::size_t c = 0;
      for (std::size_t j = 0; j < p; ++j) {
        if (j == i) continue;
        distortion[names[j]] = mic_approx(features.column(j), transformed.column(c++));
      }
      if (kind == RemovalKind::kOptimalTransport) {
        r.has_ot = true;
        r.predictability_ot_unclamped = score;
        r.predictability_ot = std::clamp(score, 0.0, 1.0);
        r.distortion_ot = std::move(distortion);
      } else {
        r.has_lr = true;
        r.predictability_lr_unclamped = score;
        r.predictability_lr = std::clamp(score, 0.0, 1.0);
        r.distortion_lr = std::move(distortion);
      }
    }
  });
  return reports;
}

std::vector<DependenceReport> dependence_removal_report(const Dataset& d, std::span<const std::size_t> audited,
                                                        std::span<const RemovalKind> backends,
                                                        const EvaluationFunction& e,
                                                        const RemovalBackend& settings, std::size_t threads) {
  return dependence_removal_report(d.features(), d.feature_names(), audited, backends, e, settings, threads);
}

std::string dependence_reports_to_json(const std::vector<DependenceReport>& reports, std::uint64_t seed) {
  nlohmann::ordered_json out;
  out["seed"] = seed;
  out["features"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["protected"] = r.protected_feature;
    j["predictability_raw"] = r.predictability_raw;
    j["predictability_raw_unclamped"] = r.predictability_raw_unclamped;
    if (r.has_lr) {
      j["predictability_lr"] = r.predictability_lr;
      j["predictability_lr_unclamped"] = r.predictability_lr_unclamped;
      j["distortion_lr"] = r.distortion_lr;
    }
    if (r.has_ot) {
      j["predictability_ot"] = r.predictability_ot;
      j["predictability_ot_unclamped"] = r.predictability_ot_unclamped;
      j["distortion_ot"] = r.distortion_ot;
    }
    out["features"].push_back(std::move(j));
  }
  return out.dump(2) + "\n";
}

}  // namespace umfi
