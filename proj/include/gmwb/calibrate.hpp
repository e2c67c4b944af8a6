#pragma once
// Break-even fee: the rate phi* at which the insurer's initial value equals
// the net premium.

#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gmwb/pricer.hpp"

namespace gmwb {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeeEvaluation {
  double phi = 0;
  double v0 = 0;
  double u0 = 0;
};

struct FeeResult {
  double phi = 0;  // annual rate, not basis points
  /// Every pricing run, in evaluation order.
  std::vector<FeeEvaluation> history;
  int iterations = 0;
  /// The evaluation closest to phi (the returned rate itself when the
  /// residual test stopped the search).
  FeeEvaluation closest() const;
  /// Policies requested in PricingOptions::record_policy, from the last
  /// evaluation (at history.back().phi).
  std::map<int, ValueSurface> policy;
  /// Evaluations spent on the coarse grid by fair_fee_warm.
  std::vector<FeeEvaluation> coarse_history;
};

struct FeeSearch {
  double phi_lo = 0.0;
  double phi_hi = 0.0150;
  double value_tol = 5e-4;   // relative to the premium
  double phi_tol = 1e-6;     // 0.01 bp
  int max_iterations = 30;
  /// Warm start: first secant point and an estimate of dU0/dphi there. The
  /// second point is the Newton step from the first, the bracket is not
  /// evaluated, and iterates are kept inside [phi_lo, 2 phi_hi - phi_lo].
  std::optional<double> guess;
  double guess_slope = 0;
};

/// Secant iterations on phi -> U0(phi) - P, started from a verified sign
/// change on [phi_lo, phi_hi] (the upper end is doubled once if needed).
FeeResult fair_fee(const ContractParams& contract, const MarketParams& market, const RateLattice& lattice,
                   const Grid4D& grid, const MortalityTable& mortality, const NumericalParams& numerics,
                   const FeeSearch& search = {}, const PricingOptions& options = {});

/// fair_fee on `coarse` first, then a warm-started secant on `grid` from the
/// coarse root and the coarse slope of U0 in phi.
FeeResult fair_fee_warm(const ContractParams& contract, const MarketParams& market, const RateLattice& lattice,
                        const Grid4D& grid, const Grid4D& coarse, const MortalityTable& mortality,
                        const NumericalParams& numerics, const FeeSearch& search = {},
                        const PricingOptions& options = {});

}  // namespace gmwb
