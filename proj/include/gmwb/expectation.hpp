#pragma once
// Discounted one-year expectation
//
//   E[ exp(-int_{t_i}^{t_i+1} r ds) phi(Y_{t_i+1}, X_{t_i+1}) | Y_{t_i} = y_m, X_{t_i} = x ]
//
// The Gaussian vector (Y, ln X, int r) is written mu + Gamma G with Gamma the
// lower Cholesky factor. G_1 is replaced by the standardised one-year move of
// the rate lattice (so Y lands exactly on lattice states) and G_2, G_3 by
// standardised Bi(N_T, 1/2) variables. Because int r is the last component,
// its binomial sum factors out of the phi-dependent sums.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "gmwb/model.hpp"
#include "gmwb/rate_lattice.hpp"

namespace gmwb {

/// Standardised binomial: support (l - n/2) / sqrt(n/4), mass C(n,l) 2^-n.
struct BinomialWeights {
  Eigen::VectorXd support;
  Eigen::VectorXd prob;

  static BinomialWeights build(int n);
  int size() const { return static_cast<int>(prob.size()); }
};

class ExpectationPlan {
 public:
  /// One destination of the refined tree: rate state `iy`, account value
  /// x * growth, and probability-times-discount `weight`.
  struct Term {
    int iy;
    double growth;
    double weight;
  };

  static ExpectationPlan build(const MarketParams& market, const RateLattice& lattice,
                               int anniversary, double phi);

  int anniversary() const { return anniversary_; }
  double phi() const { return phi_; }
  const Matrix3<double>& gamma() const { return gamma_; }
  const BinomialWeights& binomial() const { return binomial_; }

  /// One-year rate-lattice transition probability.
  double transition(int m, int l) const { return transition_(m, l); }
  int rate_states() const { return static_cast<int>(states_.size()); }
  double mu1(int m) const { return mu1_[m]; }
  double mu3(int m) const { return mu3_[m]; }
  /// mu2 - ln(x): the part of the log-account mean that does not depend on x.
  double mu2_shift(int m) const { return mu3_[m] - phi_ - 0.5 * sigma_ * sigma_; }
  /// Standardised rate move from state m to state l.
  double rate_score(int m, int l) const;
  /// Sum over the third binomial of p exp(-Gamma33 g).
  double discount_tail() const { return discount_tail_; }

  std::span<const Term> terms(int m) const {
    return {terms_.data() + offsets_[m], offsets_[m + 1] - offsets_[m]};
  }

 private:
  int anniversary_ = 0;
  double phi_ = 0;
  double sigma_ = 0;
  Eigen::VectorXd states_;
  Eigen::MatrixXd transition_;
  Matrix3<double> gamma_;
  BinomialWeights binomial_;
  Eigen::VectorXd mu1_, mu3_;
  double discount_tail_ = 1;
  std::vector<Term> terms_;
  std::vector<std::size_t> offsets_;
};

/// Refined-tree expectation for a callable phi(iy, x_next). Summation order is
/// fixed (rate destination outer, account binomial inner).
template <typename Phi>
double expect(const ExpectationPlan& plan, int m, double x, Phi&& phi) {
  double total = 0;
  for (const auto& t : plan.terms(m)) total += t.weight * phi(t.iy, x * t.growth);
  return total;
}

/// Compares the factorised sum against the naive triple sum over
/// (rate move, account binomial, discount binomial) for a table
/// phi(iy, xi2) of values on the destinations. Returns the largest relative
/// discrepancy over all source states.
double factorization_discrepancy(const ExpectationPlan& plan, const Eigen::MatrixXd& phi_table);

/// True when the discrepancy is within 1e-12 relative.
bool factorization_check(const ExpectationPlan& plan, const Eigen::MatrixXd& phi_table);

/// Plain correlated binomial tree (all three components binomial). Returns
/// {naive triple sum, factorised sum} for phi_table(xi1, xi2).
std::pair<double, double> binomial_tree_sums(const GaussianMoments& moments, int n,
                                             const Eigen::MatrixXd& phi_table);

}  // namespace gmwb
