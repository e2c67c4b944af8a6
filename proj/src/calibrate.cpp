#include "gmwb/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gmwb {

FeeEvaluation FeeResult::closest() const {
  if (history.empty()) throw CalibrationError("fair fee: no evaluations recorded");
  FeeEvaluation best = history.front();
  for (const auto& e : history)
    if (std::abs(e.phi - phi) < std::abs(best.phi - phi)) best = e;
  return best;
}

FeeResult fair_fee(const ContractParams& contract, const MarketParams& market, const RateLattice& lattice,
                   const Grid4D& grid, const MortalityTable& mortality, const NumericalParams& numerics,
                   const FeeSearch& search, const PricingOptions& options) {
  if (!(search.phi_lo < search.phi_hi)) throw CalibrationError("fair fee: phi_lo must be below phi_hi");
  const double premium = contract.premium;
  const double outer_hi = search.phi_hi + (search.phi_hi - search.phi_lo);
  FeeResult out;

  auto eval = [&](double phi) {
    ContractParams c = contract;
    c.phi = phi;
    PricingResult r = backward_sweep(c, market, lattice, grid, mortality, numerics, options);
    out.history.push_back({phi, r.v0, r.u0});
    out.policy = std::move(r.policy);
    return r.u0 - premium;
  };
  const double tol = search.value_tol * premium;

  double a, b, fa, fb;
  if (search.guess) {
    if (!(search.guess_slope < 0)) throw CalibrationError("fair fee: warm start needs a negative slope");
    a = std::clamp(*search.guess, search.phi_lo, outer_hi);
    fa = eval(a);
    out.phi = a;
    if (std::abs(fa) <= tol) return out;
    b = std::clamp(a - fa / search.guess_slope, search.phi_lo, outer_hi);
    if (std::abs(b - a) <= search.phi_tol) return out;
    fb = eval(b);
  } else {
    a = search.phi_lo;
    b = search.phi_hi;
    fa = eval(a);
    fb = eval(b);
    if (fa * fb > 0) {
      b = outer_hi;
      fb = eval(b);
      if (fa * fb > 0) {
        std::ostringstream os;
        os << "fair fee: U0 - P has no sign change on [" << a * 1e4 << ", " << b * 1e4 << "] bp";
        throw CalibrationError(os.str());
      }
    }
    if (std::abs(fa) <= tol) { out.phi = a; return out; }
  }
  if (std::abs(fb) <= tol) { out.phi = b; return out; }

  for (int it = 1; it <= search.max_iterations; ++it) {
    out.iterations = it;
    if (fb == fa) break;
    const double next = std::clamp(b - fb * (b - a) / (fb - fa), search.phi_lo, outer_hi);
    const double step = next - b;
    if (std::abs(step) <= search.phi_tol) {
      out.phi = next;
      return out;
    }
    a = b;
    fa = fb;
    b = next;
    fb = eval(b);
    if (std::abs(fb) <= tol) {
      out.phi = b;
      return out;
    }
  }
  std::ostringstream os;
  os << "fair fee: no convergence after " << out.iterations << " secant iterations (last phi "
     << b * 1e4 << " bp, U0 - P = " << fb << ")";
  throw CalibrationError(os.str());
}

FeeResult fair_fee_warm(const ContractParams& contract, const MarketParams& market, const RateLattice& lattice,
                        const Grid4D& grid, const Grid4D& coarse, const MortalityTable& mortality,
                        const NumericalParams& numerics, const FeeSearch& search, const PricingOptions& options) {
  PricingOptions quiet = options;
  quiet.record_policy.clear();
  const FeeResult first = fair_fee(contract, market, lattice, coarse, mortality, numerics, search, quiet);

  // Slope from the two coarse evaluations nearest the coarse root.
  std::vector<FeeEvaluation> h = first.history;
  std::sort(h.begin(), h.end(), [&](const FeeEvaluation& x, const FeeEvaluation& y) {
    return std::abs(x.phi - first.phi) < std::abs(y.phi - first.phi);
  });
  FeeSearch fine = search;
  fine.guess = first.phi;
  fine.guess_slope = -1;
  for (std::size_t j = 1; j < h.size(); ++j)
    if (h[j].phi != h[0].phi) {
      fine.guess_slope = (h[j].u0 - h[0].u0) / (h[j].phi - h[0].phi);
      break;
    }
  if (!(fine.guess_slope < 0)) fine.guess.reset();

  FeeResult out = fair_fee(contract, market, lattice, grid, mortality, numerics, fine, options);
  out.coarse_history = first.history;
  return out;
}

}  // namespace gmwb
