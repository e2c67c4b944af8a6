#pragma once
// Shared fixtures for the unit and property tests.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <map>
#include <random>

#include "gmwb/contract.hpp"
#include "gmwb/grid.hpp"
#include "gmwb/model.hpp"
#include "gmwb/mortality.hpp"
#include "gmwb/pricer.hpp"
#include "gmwb/rate_lattice.hpp"

namespace testing {

/// Minimal random generator for property tests: every draw comes from one
/// seeded stream so failures are reproducible from the seed alone.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }
  bool coin(double p = 0.5) { return uniform(0, 1) < p; }
  double normal() { return std::normal_distribution<double>()(rng_); }
  std::mt19937_64& engine() { return rng_; }

  gmwb::MarketParams market() {
    gmwb::MarketParams m;
    m.sigma = uniform(0.05, 0.4);
    m.r0 = uniform(0.0, 0.08);
    m.k = uniform(0.2, 2.0);
    m.omega = uniform(0.0, 0.12);
    m.rho = uniform(-1, 1);
    return m;
  }

  /// Account value skewed towards the interesting region near the premium.
  gmwb::PolicyState state(double premium = 100) {
    gmwb::PolicyState s;
    s.x = coin(0.2) ? uniform(0, 10) : uniform(0, 3 * premium);
    s.g = coin(0.1) ? premium : uniform(0, premium);
    s.h = coin(0.1) ? premium : uniform(0, premium);
    return s;
  }

 private:
  std::mt19937_64 rng_;
};

/// Adaptive Simpson quadrature, used as an independent oracle.
inline double simpson(const std::function<double(double)>& f, double a, double b, double tol, int depth = 40) {
  const auto rule = [&](double l, double r, double fl, double fm, double fr) { return (r - l) / 6 * (fl + 4 * fm + fr); };
  const std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double l, double r, double fl, double fm, double fr, double whole, int d) {
        const double m = 0.5 * (l + r);
        const double lm = 0.5 * (l + m), rm = 0.5 * (m + r);
        const double flm = f(lm), frm = f(rm);
        const double left = rule(l, m, fl, flm, fm), right = rule(m, r, fm, frm, fr);
        if (d <= 0 || std::abs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15;
        return rec(l, m, fl, flm, fm, left, d - 1) + rec(m, r, fm, frm, fr, right, d - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, rule(a, b, fa, fm, fb), depth);
}

inline gmwb::MarketParams base_market() { return {}; }

inline gmwb::ContractParams base_contract(bool taxed) {
  gmwb::ContractParams c;
  c.premium_tax = 0.03;
  c.tau = taxed ? 0.30 : 0.0;
  c.kappa = taxed ? 0.23 : 0.0;
  c.phi = 0.0050;
  return c;
}

/// Smooth, increasing mortality over the ages a 15-year contract needs.
inline gmwb::MortalityTable toy_mortality(double scale = 1.0) {
  std::map<int, double> q;
  for (int a = 40; a <= 100; ++a) q[a] = std::min(1.0, scale * 0.004 * std::exp(0.08 * (a - 55)));
  return gmwb::MortalityTable(q);
}

/// Small but complete pricing problem.
struct Tiny {
  gmwb::MarketParams market = base_market();
  gmwb::RateLattice lattice;
  gmwb::Grid4D grid;
  gmwb::NumericalParams numerics;

  explicit Tiny(int n_t = 4, int nx1 = 12, int nx2 = 6, int ng = 5, int nh = 5) {
    numerics.n_t = n_t;
    numerics.grid = {100, nx1, nx2, ng, nh};
    lattice = gmwb::RateLattice::build(market, n_t);
    grid = gmwb::Grid4D::build(numerics.grid, lattice);
  }
};

}  // namespace testing
