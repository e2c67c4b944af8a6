#include "doctest.h"
#include "support.hpp"

#include <set>

#include "gmwb/pricer.hpp"

using namespace gmwb;

namespace {

struct Surfaces {
  ValueSurface v, u;
};

Surfaces terminal(const Grid4D& grid, const ContractParams& c) {
  Surfaces s{ValueSurface(grid), ValueSurface(grid)};
  for (int iy = 0; iy < grid.ny(); ++iy)
    for (int ix = 0; ix < grid.nx(); ++ix)
      for (int ig = 0; ig < grid.ng(); ++ig)
        for (int ih = 0; ih < grid.nh(); ++ih) {
          s.v(iy, ix, ig, ih) = terminal_value_ph(grid.xs[ix], grid.gs[ig], grid.hs[ih], c.g_w, c.tau);
          s.u(iy, ix, ig, ih) = terminal_value_insurer(grid.xs[ix], grid.gs[ig], c.g_w);
        }
  return s;
}

/// Backward recursion from maturity down to anniversary `stop`, calling
/// `visit(i, plus, minus, residual)` after every anniversary.
template <typename Visit>
Surfaces sweep_to(const testing::Tiny& t, const ContractParams& c, const MortalityTable& mort, int stop,
                  WithdrawalMode mode, Visit&& visit) {
  Surfaces next = terminal(t.grid, c);
  Surfaces plus{ValueSurface(t.grid), ValueSurface(t.grid)};
  for (int i = c.maturity - 1; i >= stop; --i) {
    const ExpectationPlan plan = ExpectationPlan::build(t.market, t.lattice, i, c.phi);
    const double res = plus_step(plan, t.grid, next.v, next.u, mort.q(c.age0 + i), c, 1, plus.v, plus.u);
    minus_step(t.grid, plus.v, plus.u, withdrawal_terms(c, i), mode, 1.0, 1, next.v, next.u);
    visit(i, plus, next, res);
  }
  return next;
}

/// Smooth-ish increasing surface with noise: stands in for a continuation value.
ValueSurface random_surface(const Grid4D& grid, testing::Gen& gen, double noise) {
  ValueSurface s(grid);
  const double a = gen.uniform(0.5, 1.0), b = gen.uniform(0, 0.3), c = gen.uniform(0, 0.2);
  for (int iy = 0; iy < grid.ny(); ++iy)
    for (int ix = 0; ix < grid.nx(); ++ix)
      for (int ig = 0; ig < grid.ng(); ++ig)
        for (int ih = 0; ih < grid.nh(); ++ih) {
          const double x = grid.xs[ix], g = grid.gs[ig], h = grid.hs[ih];
          s(iy, ix, ig, ih) = a * x + b * g + c * h + 5 * std::sqrt(x + 1) + 0.3 * iy + gen.uniform(0, noise);
        }
  return s;
}

}  // namespace

TEST_SUITE("pricer") {

TEST_CASE("fixed point without capital-gains tax is the plain expectation") {
  const std::vector<double> a{0.2, 0.3, 0.45}, f{90, 100, 120};
  const auto r = solve_fixed_point(a, f, 0.0, 1e-7);
  CHECK(r.iterations == 0);
  CHECK(r.value == doctest::Approx(0.2 * 90 + 0.3 * 100 + 0.45 * 120).epsilon(1e-15));
  CHECK(subjective_map(a, f, 0.0, 12345.0) == r.value);
}

TEST_CASE("fixed point against damped iteration and bisection") {
  // weights from a real plan: N_T = 4, 5 account nodes
  const MarketParams market;
  const RateLattice lat = RateLattice::build(market, 4);
  const ExpectationPlan plan = ExpectationPlan::build(market, lat, 3, 0.005);
  testing::Gen gen(61);
  const double premium = 100;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = gen.integer(0, lat.size() - 1);
    const double x = std::vector<double>{0, 25, 80, 150, 400}[gen.integer(0, 4)];
    std::vector<double> a, f;
    for (const auto& t : plan.terms(m)) {
      a.push_back(t.weight);
      f.push_back(gen.uniform(0, 1) * 20 + std::max(x * t.growth, 7.0) + gen.uniform(-2, 2));
    }
    const double kappa = gen.coin(0.5) ? 0.23 : gen.uniform(0.01, 0.6);
    const auto r = solve_fixed_point(a, f, kappa, 1e-9 * premium);
    CHECK(std::abs(r.value - subjective_map(a, f, kappa, r.value)) <= 1e-8 * premium);
    CHECK(r.residual <= 1e-8 * premium);

    double v = 0;
    for (int it = 0; it < 100000; ++it) {
      const double next = 0.5 * v + 0.5 * subjective_map(a, f, kappa, v);
      const bool done = std::abs(next - v) <= 1e-12;
      v = next;
      if (done) break;
    }
    CHECK(std::abs(r.value - v) <= 1e-8 * premium);

    double lo = -1e4, hi = 1e4;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (subjective_map(a, f, kappa, mid) - mid > 0 ? lo : hi) = mid;
    }
    CHECK(std::abs(r.value - 0.5 * (lo + hi)) <= 1e-8 * premium);
  }
}

TEST_CASE("candidate set") {
  const auto c = withdrawal_candidates({0, 100, 100}, 7, 1);
  CHECK(std::set<double>(c.begin(), c.end()) == std::set<double>{0, 1, 2, 3, 4, 5, 6, 7});
  const auto d = withdrawal_candidates({10.5, 100, 100}, 7, 1);
  CHECK(std::set<double>(d.begin(), d.end()) ==
        std::set<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 7 + 1e-6, 10.5});
  const auto e = withdrawal_candidates({0, 3.5, 100}, 7, 1);
  CHECK(std::set<double>(e.begin(), e.end()) == std::set<double>{0, 1, 2, 3, 3.5});
}

TEST_CASE("optimised withdrawal matches the exhaustive search") {
  testing::Tiny t(4, 14, 6, 6, 5);
  testing::Gen gen(62);
  std::vector<WithdrawalChoice> column(t.grid.ng());
  for (int trial = 0; trial < 6; ++trial) {
    const ValueSurface plus = random_surface(t.grid, gen, trial % 2 ? 3.0 : 0.0);
    ContractParams c = testing::base_contract(trial % 3 != 0);
    const int i = gen.integer(1, 14);
    const WithdrawalTerms terms = withdrawal_terms(c, i);
    for (int iy = 0; iy < t.grid.ny(); iy += 2)
      for (int ix = 0; ix < t.grid.nx(); ++ix)
        for (int ih = 0; ih < t.grid.nh(); ++ih) {
          optimize_withdrawal_column(t.grid, plus, iy, ix, ih, terms, 1.0, column);
          for (int ig = 0; ig < t.grid.ng(); ++ig) {
            const auto ref = optimize_withdrawal_exhaustive(t.grid, plus, iy, ix, ig, ih, terms, 1.0);
            const auto one = optimize_withdrawal(t.grid, plus, iy, ix, ig, ih, terms, 1.0);
            const double tol = 1e-12 * (1 + std::abs(ref.value));
            CHECK(std::abs(one.value - ref.value) <= tol);
            CHECK(std::abs(column[ig].value - ref.value) <= tol);
            CHECK(one.w == column[ig].w);

            const PolicyState s{t.grid.xs[ix], t.grid.gs[ig], t.grid.hs[ih]};
            CHECK(ref.value >= withdrawal_value(t.grid, plus, iy, s, 0, terms));
            CHECK(ref.value >= withdrawal_value(t.grid, plus, iy, s, std::min(c.g_w, max_withdrawal(s, c)), terms));
            CHECK(ref.w >= 0);
            CHECK(ref.w <= max_withdrawal(s, c));
          }
        }
  }
}

TEST_CASE("insurer value before withdrawal") {
  testing::Tiny t;
  testing::Gen gen(63);
  const ValueSurface u = random_surface(t.grid, gen, 1.0);
  ContractParams c = testing::base_contract(true);
  const WithdrawalTerms terms = withdrawal_terms(c, 2);
  CHECK(insurer_minus(t.grid, u, 1, 3, 2, 4, 0.0, terms) == u(1, 3, 2, 4));
  const PolicyState s{t.grid.xs[10], t.grid.gs[5], t.grid.hs[1]};
  const double w = 12;
  const auto o = withdraw(s, w, terms);
  const double expect = trilinear(t.grid, u, 1, o.after.x, o.after.g, o.after.h) + w - o.cash.fee - o.cash.pen;
  CHECK(insurer_minus(t.grid, u, 1, 10, 5, 1, w, terms) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(o.cash.gross() >= o.cash.net());
}

TEST_CASE("plus step agrees with the per-point reference") {
  testing::Tiny t(6, 10, 5, 4, 3);
  testing::Gen gen(64);
  for (bool taxed : {false, true}) {
    const ContractParams c = testing::base_contract(taxed);
    const ValueSurface nv = random_surface(t.grid, gen, 2.0), nu = random_surface(t.grid, gen, 2.0);
    const ExpectationPlan plan = ExpectationPlan::build(t.market, t.lattice, 7, c.phi);
    ValueSurface vp(t.grid), up(t.grid);
    const double res = plus_step(plan, t.grid, nv, nu, 0.02, c, 1, vp, up);
    CHECK(res <= 1e-8 * c.premium);
    for (int iy = 0; iy < t.grid.ny(); ++iy)
      for (int ix = 0; ix < t.grid.nx(); ++ix)
        for (int ig = 0; ig < t.grid.ng(); ++ig)
          for (int ih = 0; ih < t.grid.nh(); ++ih) {
            const auto ref = plus_values_reference(plan, t.grid, nv, nu, iy, t.grid.xs[ix], ig, ih, 0.02, c);
            CHECK(std::abs(vp(iy, ix, ig, ih) - ref.v) <= 1e-8 * c.premium);
            CHECK(std::abs(up(iy, ix, ig, ih) - ref.u) <= 1e-10 * c.premium);
          }
  }
}

TEST_CASE("sweep invariants: residual, dominance over the static policy, sign and monotonicity") {
  testing::Tiny t(4, 16, 6, 5, 4);  // G nodes are multiples of the withdrawal step
  const MortalityTable mort = testing::toy_mortality();
  for (bool taxed : {false, true}) {
    const ContractParams c = testing::base_contract(taxed);
    const double tol = 1e-9 * c.premium;
    sweep_to(t, c, mort, 9, WithdrawalMode::Optimal, [&](int i, const Surfaces& plus, const Surfaces& minus, double res) {
      INFO("anniversary " << i << " taxed " << taxed);
      CHECK(res <= 1e-8 * c.premium);
      ValueSurface vs(t.grid), us(t.grid);
      minus_step(t.grid, plus.v, plus.u, withdrawal_terms(c, i), WithdrawalMode::Static, 1.0, 1, vs, us);
      for (std::size_t k = 0; k < vs.size(); ++k) CHECK(minus.v.values()[k] >= vs.values()[k] - tol);
      const ValueSurface* all[] = {&plus.v, &plus.u, &minus.v, &minus.u};
      for (int which = 0; which < 4; ++which)
        for (int iy = 0; iy < t.grid.ny(); ++iy)
          for (int ig = 0; ig < t.grid.ng(); ++ig)
            for (int ih = 0; ih < t.grid.nh(); ++ih) {
              INFO("surface " << which << " iy " << iy << " ig " << ig << " ih " << ih);
              const auto line = all[which]->line(iy, ig, ih);
              for (std::size_t ix = 0; ix < line.size(); ++ix) {
                CHECK(std::isfinite(line[ix]));
                CHECK(line[ix] >= 0);
                // with tax, w - tau min(w, x - h) falls in x below the withdrawal, so only untaxed values are monotone
                if (ix > 0 && !taxed) CHECK(line[ix] >= line[ix - 1] - tol);
              }
            }
    });
  }
}

TEST_CASE("without taxes the policyholder and insurer recursions coincide") {
  testing::Tiny t(4, 12, 6, 5, 3);
  const MortalityTable mort = testing::toy_mortality();
  const ContractParams c = testing::base_contract(false);
  sweep_to(t, c, mort, 1, WithdrawalMode::Optimal, [&](int i, const Surfaces& plus, const Surfaces& minus, double) {
    INFO("anniversary " << i);
    for (std::size_t k = 0; k < plus.v.size(); ++k) {
      CHECK(std::abs(plus.v.values()[k] - plus.u.values()[k]) <= 1e-6 * c.premium);
      CHECK(std::abs(minus.v.values()[k] - minus.u.values()[k]) <= 1e-6 * c.premium);
    }
  });
  const PricingResult r = backward_sweep(c, t.market, t.lattice, t.grid, mort, t.numerics);
  CHECK(std::abs(r.v0 - r.u0) <= 1e-6 * c.premium);
}

TEST_CASE("collapsed H axis agrees with the full sweep") {
  testing::Tiny t(4, 12, 6, 5, 4);
  const MortalityTable mort = testing::toy_mortality();
  const ContractParams c = testing::base_contract(false);
  PricingOptions full, fast;
  full.collapse_untaxed_h = false;
  full.record_policy = fast.record_policy = {3, 9};
  const PricingResult a = backward_sweep(c, t.market, t.lattice, t.grid, mort, t.numerics, full);
  const PricingResult b = backward_sweep(c, t.market, t.lattice, t.grid, mort, t.numerics, fast);
  CHECK(std::abs(a.v0 - b.v0) <= 1e-12 * c.premium);
  CHECK(std::abs(a.u0 - b.u0) <= 1e-12 * c.premium);
  for (int i : {3, 9}) {
    CHECK(b.policy.at(i).nh() == t.grid.nh());
    CHECK(a.policy.at(i).values() == b.policy.at(i).values());
  }
}

TEST_CASE("optimal withdrawals beat the static strategy at inception") {
  testing::Tiny t(4, 12, 6, 5, 4);
  const MortalityTable mort = testing::toy_mortality();
  for (bool taxed : {false, true}) {
    const ContractParams c = testing::base_contract(taxed);
    PricingOptions stat;
    stat.mode = WithdrawalMode::Static;
    const PricingResult opt = backward_sweep(c, t.market, t.lattice, t.grid, mort, t.numerics);
    const PricingResult sta = backward_sweep(c, t.market, t.lattice, t.grid, mort, t.numerics, stat);
    CHECK(opt.v0 >= sta.v0 - 1e-9);
    CHECK(opt.max_fixed_point_residual <= 1e-8 * c.premium);
  }
}

TEST_CASE("recorded policies hold candidate withdrawals") {
  testing::Tiny t(4, 12, 6, 5, 4);
  const MortalityTable mort = testing::toy_mortality();
  const ContractParams c = testing::base_contract(true);
  PricingOptions o;
  o.record_policy = {4, 12};
  const PricingResult r = backward_sweep(c, t.market, t.lattice, t.grid, mort, t.numerics, o);
  CHECK(r.policy.size() == 2);
  const ValueSurface& w = r.policy.at(12);
  for (int iy = 0; iy < t.grid.ny(); ++iy)
    for (int ix = 0; ix < t.grid.nx(); ++ix)
      for (int ig = 0; ig < t.grid.ng(); ++ig)
        for (int ih = 0; ih < t.grid.nh(); ++ih) {
          const PolicyState s{t.grid.xs[ix], t.grid.gs[ig], t.grid.hs[ih]};
          const auto cand = withdrawal_candidates(s, c.g_w, 1.0);
          CHECK(std::find(cand.begin(), cand.end(), w(iy, ix, ig, ih)) != cand.end());
        }
}

TEST_CASE("results do not depend on the thread count") {
  testing::Tiny t(4, 12, 6, 5, 4);
  const MortalityTable mort = testing::toy_mortality();
  const ContractParams c = testing::base_contract(true);
  PricingOptions one, many;
  one.record_policy = many.record_policy = {8};
  many.threads = 3;
  const PricingResult a = backward_sweep(c, t.market, t.lattice, t.grid, mort, t.numerics, one);
  const PricingResult b = backward_sweep(c, t.market, t.lattice, t.grid, mort, t.numerics, many);
  CHECK(a.v0 == b.v0);
  CHECK(a.u0 == b.u0);
  CHECK(a.policy.at(8).values() == b.policy.at(8).values());
}

TEST_CASE("zero mortality matches an immortal table; certain death pays the account") {
  testing::Tiny t;
  const ContractParams c = testing::base_contract(true);
  const PricingResult a = backward_sweep(c, t.market, t.lattice, t.grid, MortalityTable::immortal(55, 69), t.numerics);
  std::map<int, double> zeros;
  for (int age = 50; age <= 80; ++age) zeros[age] = 0.0;
  const PricingResult b = backward_sweep(c, t.market, t.lattice, t.grid, MortalityTable(zeros), t.numerics);
  CHECK(a.v0 == b.v0);
  CHECK(a.u0 == b.u0);

  // q = 1 and no fee: the insurer owes the account one year out, worth x today
  ContractParams free = testing::base_contract(false);
  free.phi = 0;
  const ExpectationPlan plan = ExpectationPlan::build(t.market, t.lattice, 5, 0.0);
  const ValueSurface zero(t.grid);
  ValueSurface vp(t.grid), up(t.grid);
  plus_step(plan, t.grid, zero, zero, 1.0, free, 1, vp, up);
  for (int ix = 1; ix < t.grid.nx(); ix += 3)
    CHECK(up(t.lattice.origin(), ix, 2, 2) == doctest::Approx(t.grid.xs[ix]).epsilon(1e-3));
  // nothing owed at all when the next values vanish and nobody dies
  plus_step(plan, t.grid, zero, zero, 0.0, free, 1, vp, up);
  for (double v : up.values()) CHECK(v == 0.0);
}

TEST_CASE("invalid inputs are rejected") {
  testing::Tiny t;
  const MortalityTable mort = testing::toy_mortality();
  const ContractParams c = testing::base_contract(true);
  PricingOptions o;
  o.record_policy = {15};
  CHECK_THROWS_AS(backward_sweep(c, t.market, t.lattice, t.grid, mort, t.numerics, o), std::invalid_argument);
  CHECK_THROWS(backward_sweep(c, t.market, t.lattice, t.grid, MortalityTable::immortal(55, 60), t.numerics));
  testing::Tiny other(8);
  CHECK_THROWS_AS(backward_sweep(c, t.market, t.lattice, other.grid, mort, t.numerics), std::invalid_argument);
  NumericalParams bad = t.numerics;
  bad.delta_w = 0;
  CHECK_THROWS_AS(backward_sweep(c, t.market, t.lattice, t.grid, mort, bad), std::invalid_argument);
}

}
