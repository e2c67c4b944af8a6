#include "gmwb/contract.hpp"

#include <stdexcept>
#include <string>

namespace gmwb {

void ContractParams::validate() const {
  auto rate = [](double v, const char* name) {
    if (!(v >= 0 && v < 1)) throw std::invalid_argument(std::string("contract: ") + name + " must be in [0,1)");
  };
  rate(premium_tax, "premium_tax");
  rate(s_g, "s_g");
  rate(tau, "tau");
  rate(kappa, "kappa");
  if (maturity < 1) throw std::invalid_argument("contract: maturity must be >= 1");
  if (!(premium > 0)) throw std::invalid_argument("contract: premium must be > 0");
  if (!(g_w > 0)) throw std::invalid_argument("contract: g_w must be > 0");
  for (double s : surrender)
    if (!(s >= 0 && s < 1)) throw std::invalid_argument("contract: surrender charges must be in [0,1)");
  // The maturity formulas assume no penalty on the final withdrawal.
  if (penalised(maturity)) throw std::invalid_argument("contract: policyholder must be at least 59.5 at maturity");
}

WithdrawalOutcome apply_withdrawal(const PolicyState& s, double w, int anniversary, const ContractParams& c) {
  const double cap = max_withdrawal(s, c);
  if (!(w >= 0 && w <= cap))
    throw std::out_of_range("withdrawal " + std::to_string(w) + " outside [0, " + std::to_string(cap) + "]");
  return withdraw(s, w, withdrawal_terms(c, anniversary));
}

}  // namespace gmwb
