#pragma once
// GMWB cash-flow mechanics at a contract anniversary: withdrawal limits,
// excess-withdrawal fee, early-withdrawal penalty, income tax, updates of the
// account value X, benefit base G and tax base H, plus the closed-form
// maturity values for both valuation perspectives.

#include <algorithm>
#include <vector>

namespace gmwb {

struct ContractParams {
  int age0 = 55;
  int maturity = 15;
  double premium_tax = 0.0;   // chi
  double premium = 100;       // net premium P = GP (1 - chi)
  double g_w = 7;             // annual guaranteed amount
  /// Excess-withdrawal fee s_i for anniversaries i = 1, 2, ...; zero past the end.
  std::vector<double> surrender{0.08, 0.07, 0.06, 0.05, 0.04, 0.03, 0.02, 0.01};
  double s_g = 0.10;          // early-withdrawal penalty rate
  double tau = 0.0;           // policyholder income tax
  double kappa = 0.0;         // capital-gains tax outside the policy
  double phi = 0.0;           // fee rate per year

  double gross_premium() const { return premium / (1.0 - premium_tax); }
  double surrender_charge(int anniversary) const {
    return anniversary >= 1 && anniversary <= static_cast<int>(surrender.size())
               ? surrender[anniversary - 1]
               : 0.0;
  }
  bool penalised(int anniversary) const { return age0 + anniversary < 59.5; }
  void validate() const;
};

struct PolicyState {
  double x = 0;  // account value
  double g = 0;  // benefit base
  double h = 0;  // tax base
};

struct CashBreakdown {
  double w = 0;
  double fee = 0;
  double pen = 0;
  double tax = 0;
  double net() const { return w - fee - pen - tax; }
  /// What the insurer pays out: taxes are the policyholder's business.
  double gross() const { return w - fee - pen; }
};

inline double positive_part(double v) { return v > 0 ? v : 0.0; }

inline double max_withdrawal(const PolicyState& s, const ContractParams& c) {
  return std::max(s.x, std::min(c.g_w, s.g));
}

/// State after withdrawing w at anniversary i and the split of w into
/// fee / penalty / tax / net. H is floored at zero.
struct WithdrawalOutcome {
  PolicyState after;
  CashBreakdown cash;
};

/// Unchecked kernel shared by the pricer's inner loop. Requires
/// 0 <= w <= max_withdrawal(s).
struct WithdrawalTerms {
  double surrender = 0;
  double penalty = 0;  // s_g, or 0 when the age test fails
  double tau = 0;
  double g_w = 0;
};

inline WithdrawalTerms withdrawal_terms(const ContractParams& c, int anniversary) {
  return {c.surrender_charge(anniversary), c.penalised(anniversary) ? c.s_g : 0.0, c.tau, c.g_w};
}

inline WithdrawalOutcome withdraw(const PolicyState& s, double w, const WithdrawalTerms& t) {
  WithdrawalOutcome o;
  const double gain = positive_part(s.x - s.h);
  o.after.x = positive_part(s.x - w);
  if (w <= t.g_w) {
    o.after.g = positive_part(s.g - w);
  } else {
    o.after.g = positive_part(std::min(s.g - w, s.g * (o.after.x / s.x)));
  }
  o.after.h = positive_part(s.h - positive_part(w - gain));
  o.cash.w = w;
  o.cash.fee = t.surrender * positive_part(w - std::min(t.g_w, s.g));
  o.cash.pen = t.penalty * (w - o.cash.fee);
  o.cash.tax = t.tau * std::min(w - o.cash.fee - o.cash.pen, gain);
  return o;
}

/// Checked entry point: throws when w is outside [0, W_max].
WithdrawalOutcome apply_withdrawal(const PolicyState& s, double w, int anniversary, const ContractParams& c);

/// Death benefit paid to the heirs, net of income tax on the gain.
inline double death_benefit(const PolicyState& s, double tau) {
  return s.x - tau * positive_part(s.x - s.h);
}

/// Policyholder value just before the final withdrawal, with the optimal
/// final withdrawal min(g_w, g) already applied.
inline double terminal_value_ph(double x, double g, double h, double g_w, double tau) {
  const double wt = std::min(g_w, g);
  const double gain = positive_part(x - h);
  return std::max(x, wt) - tau * std::min(wt, gain) -
         tau * positive_part(positive_part(wt - gain) + positive_part(x - wt) - h);
}

inline double terminal_value_insurer(double x, double g, double g_w) {
  return std::max(x, std::min(g_w, g));
}

}  // namespace gmwb
