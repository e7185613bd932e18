#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "umfi/core_data.hpp"
#include "umfi/dependency_removal.hpp"
#include "umfi/evaluator.hpp"
#include "umfi/random.hpp"

namespace umfi {

// Dense joint probability table over a product of finite alphabets, row-major with the
// last variable varying fastest.
class DiscreteJoint {
 public:
  DiscreteJoint(std::vector<std::size_t> dims, std::vector<double> probabilities);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const std::vector<double>& probabilities() const noexcept { return probs_; }
  std::size_t num_variables() const noexcept { return dims_.size(); }

  // Marginal over `vars` (in the given order), as a dense table.
  std::vector<double> marginal(std::span<const std::size_t> vars) const;
  // Multi-index of a flat cell.
  std::vector<std::size_t> unravel(std::size_t cell) const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> probs_;
};

// Joint entropy of a group of variables in bits; the empty group has entropy 0.
double entropy(const DiscreteJoint& j, std::span<const std::size_t> vars);
// I(A;B) in bits by direct summation over the joint of A and B.
double mutual_information(const DiscreteJoint& j, std::span<const std::size_t> a, std::span<const std::size_t> b);
// I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C).
double conditional_mutual_information(const DiscreteJoint& j, std::span<const std::size_t> a,
                                      std::span<const std::size_t> b, std::span<const std::size_t> c);

// Draws a joint over (S, f, X, Y): S, f, X mutually independent with random marginals,
// Y | (S, f, X) an arbitrary random conditional.
DiscreteJoint random_independent_context_joint(std::size_t alphabet, Rng& rng);

struct SupermodularityCheck {
  double gain_with_context = 0.0;     // I(Y;S,f,X) - I(Y;S,X)
  double gain_without_context = 0.0;  // I(Y;S,f) - I(Y;S)
  bool holds(double tolerance = 1e-9) const { return gain_with_context >= gain_without_context - tolerance; }
};

// Variables are ordered (S, f, X, Y).
SupermodularityCheck check_supermodularity(const DiscreteJoint& j);

// Fraction of random trials where the supermodularity inequality fails.
double verify_supermodularity(std::size_t trials, std::size_t alphabet, SeedSpec seed);

// Maximal-information-coefficient style dependence in [0, 1] from equal-frequency grids
// with a*b <= grid_budget (default floor(n^0.6)).
double mic_approx(std::span<const double> x, std::span<const double> y, std::size_t grid_budget = 0);

struct DependenceReport {
  std::string protected_feature;
  // OOB skill of predicting the protected feature from the other features, by backend.
  double predictability_raw = 0.0;
  double predictability_lr = 0.0;
  double predictability_ot = 0.0;
  double predictability_raw_unclamped = 0.0;
  double predictability_lr_unclamped = 0.0;
  double predictability_ot_unclamped = 0.0;
  bool has_lr = false;
  bool has_ot = false;
  // Dependence between each other feature and its transform.
  std::map<std::string, double> distortion_lr;
  std::map<std::string, double> distortion_ot;
};

// Never reads a response: each audited feature in turn plays the response.
std::vector<DependenceReport> dependence_removal_report(const Matrix& features, std::span<const std::string> names,
                                                        std::span<const std::size_t> audited,
                                                        std::span<const RemovalKind> backends,
                                                        const EvaluationFunction& e,
                                                        const RemovalBackend& settings = {},
                                                        std::size_t threads = 1);
std::vector<DependenceReport> dependence_removal_report(const Dataset& d, std::span<const std::size_t> audited,
                                                        std::span<const RemovalKind> backends,
                                                        const EvaluationFunction& e,
                                                        const RemovalBackend& settings = {},
                                                        std::size_t threads = 1);

std::string dependence_reports_to_json(const std::vector<DependenceReport>& reports, std::uint64_t seed);

}  // namespace umfi
