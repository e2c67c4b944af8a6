#include "gmwb/expectation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gmwb {

BinomialWeights BinomialWeights::build(int n) {
  if (n < 1) throw std::invalid_argument("binomial weights: n must be >= 1");
  BinomialWeights b;
  b.support.resize(n + 1);
  b.prob.resize(n + 1);
  const double scale = std::sqrt(n / 4.0);
  double p = std::ldexp(1.0, -n);
  for (int l = 0; l <= n; ++l) {
    b.support[l] = (l - n / 2.0) / scale;
    b.prob[l] = p;
    p = p * (n - l) / (l + 1);
  }
  return b;
}

ExpectationPlan ExpectationPlan::build(const MarketParams& market, const RateLattice& lattice,
                                       int anniversary, double phi) {
  ExpectationPlan plan;
  plan.anniversary_ = anniversary;
  plan.phi_ = phi;
  plan.sigma_ = market.sigma;
  plan.states_ = lattice.states();
  plan.transition_ = lattice.annual();
  plan.binomial_ = BinomialWeights::build(lattice.steps_per_year());

  const Matrix3<double> pi = one_year_covariance(market);
  plan.gamma_ = guarded_cholesky(pi);
  const auto& gm = plan.gamma_;
  const auto& bw = plan.binomial_;

  plan.discount_tail_ = 0;
  for (int l = 0; l < bw.size(); ++l) plan.discount_tail_ += bw.prob[l] * std::exp(-gm(2, 2) * bw.support[l]);

  const int ny = lattice.size();
  const double t = anniversary;
  const double ek = std::exp(-market.k);
  const double ib = integral_beta(t, t + 1, market);
  plan.mu1_.resize(ny);
  plan.mu3_.resize(ny);
  for (int m = 0; m < ny; ++m) {
    const double y = lattice.state(m);
    plan.mu1_[m] = y * ek;
    plan.mu3_[m] = y * (1 - ek) / market.k + ib;
  }

  const Eigen::MatrixXd& annual = lattice.annual();
  plan.offsets_.assign(ny + 1, 0);
  plan.terms_.reserve(static_cast<std::size_t>(ny) * ny * bw.size());
  for (int m = 0; m < ny; ++m) {
    plan.offsets_[m] = plan.terms_.size();
    const double shift = plan.mu2_shift(m);
    for (int l = 0; l < ny; ++l) {
      const double pl = annual(m, l);
      if (pl == 0) continue;
      const double z = plan.rate_score(m, l);
      for (int b = 0; b < bw.size(); ++b) {
        const double gb = bw.support[b];
        const double growth = std::exp(shift + gm(1, 0) * z + gm(1, 1) * gb);
        const double disc = std::exp(-plan.mu3_[m] - gm(2, 0) * z - gm(2, 1) * gb) * plan.discount_tail_;
        plan.terms_.push_back({l, growth, pl * bw.prob[b] * disc});
      }
    }
  }
  plan.offsets_[ny] = plan.terms_.size();
  return plan;
}

double ExpectationPlan::rate_score(int m, int l) const {
  const double g11 = gamma_(0, 0);
  if (g11 == 0) return 0.0;
  return (states_[l] - mu1_[m]) / g11;
}

double factorization_discrepancy(const ExpectationPlan& plan, const Eigen::MatrixXd& phi_table) {
  const auto& bw = plan.binomial();
  const auto& gm = plan.gamma();
  const int ny = plan.rate_states();
  if (phi_table.rows() != ny) throw std::invalid_argument("factorization check: table height must match the rate lattice");
  if (phi_table.cols() != bw.size()) throw std::invalid_argument("factorization check: table width must be N_T+1");
  double worst = 0;
  for (int m = 0; m < ny; ++m) {
    // Factorised: walk the plan's terms, which enumerate (l, b) in order.
    double fact = 0;
    int idx = 0;
    const auto terms = plan.terms(m);
    for (const auto& t : terms) {
      const int b = idx % bw.size();
      fact += t.weight * phi_table(t.iy, b);
      ++idx;
    }
    // Naive triple sum, recomputing every lambda_3.
    double naive = 0;
    for (int l = 0; l < plan.rate_states(); ++l) {
      const double pl = plan.transition(m, l);
      if (pl == 0) continue;
      const double z = plan.rate_score(m, l);
      for (int b2 = 0; b2 < bw.size(); ++b2) {
        double inner = 0;
        for (int b3 = 0; b3 < bw.size(); ++b3) {
          const double lam3 = plan.mu3(m) + gm(2, 0) * z + gm(2, 1) * bw.support[b2] + gm(2, 2) * bw.support[b3];
          inner += bw.prob[b3] * std::exp(-lam3);
        }
        naive += pl * bw.prob[b2] * phi_table(l, b2) * inner;
      }
    }
    const double scale = std::max({std::abs(naive), std::abs(fact), 1e-300});
    if (naive == 0 && fact == 0) continue;
    worst = std::max(worst, std::abs(naive - fact) / scale);
  }
  return worst;
}

bool factorization_check(const ExpectationPlan& plan, const Eigen::MatrixXd& phi_table) {
  return factorization_discrepancy(plan, phi_table) <= 1e-12;
}

std::pair<double, double> binomial_tree_sums(const GaussianMoments& mo, int n, const Eigen::MatrixXd& phi_table) {
  const BinomialWeights bw = BinomialWeights::build(n);
  const auto& gm = mo.Gamma;
  double naive = 0;
  for (int a = 0; a < bw.size(); ++a)
    for (int b = 0; b < bw.size(); ++b)
      for (int c = 0; c < bw.size(); ++c) {
        const double lam3 = mo.mu[2] + gm(2, 0) * bw.support[a] + gm(2, 1) * bw.support[b] + gm(2, 2) * bw.support[c];
        naive += bw.prob[a] * bw.prob[b] * bw.prob[c] * std::exp(-lam3) * phi_table(a, b);
      }
  double tail = 0;
  for (int c = 0; c < bw.size(); ++c) tail += bw.prob[c] * std::exp(-gm(2, 2) * bw.support[c]);
  double fact = 0;
  for (int a = 0; a < bw.size(); ++a) {
    double row = 0;
    for (int b = 0; b < bw.size(); ++b)
      row += bw.prob[b] * phi_table(a, b) *
             std::exp(-mo.mu[2] - gm(2, 0) * bw.support[a] - gm(2, 1) * bw.support[b]);
    fact += bw.prob[a] * row * tail;
  }
  return {naive, fact};
}

}  // namespace gmwb
