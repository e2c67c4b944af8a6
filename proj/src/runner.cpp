#include "gmwb/runner.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace gmwb {

namespace {

struct Setup {
  MortalityTable mortality;
  RateLattice lattice;
  Grid4D grid;
};

Setup prepare(const RunConfig& config, const MarketParams& market) {
  config.validate();
  Setup s{MortalityTable::load(config.mortality_path()), RateLattice::build(market, config.numerics.n_t), {}};
  s.grid = Grid4D::build(config.numerics.grid, s.lattice);
  return s;
}

MarketParams with_cell(MarketParams m, const MarketCell& cell) {
  m.r0 = cell.r0;
  m.sigma = cell.sigma;
  m.omega = cell.omega;
  return m;
}

ContractParams untaxed(ContractParams c) {
  c.tau = 0;
  c.kappa = 0;
  return c;
}

int nearest_node(const Eigen::VectorXd& nodes, double v) {
  int best = 0;
  for (int j = 1; j < nodes.size(); ++j)
    if (std::abs(nodes[j] - v) < std::abs(nodes[best] - v)) best = j;
  return best;
}

}  // namespace

PriceReport run_price(const RunConfig& config, int threads) {
  const Setup s = prepare(config, config.market);
  PricingOptions opts;
  opts.threads = threads;
  const PricingResult r =
      backward_sweep(config.contract, config.market, s.lattice, s.grid, s.mortality, config.numerics, opts);
  PriceReport rep;
  rep.v0 = r.v0;
  rep.u0 = r.u0;
  rep.ny = s.grid.ny();
  rep.nx = s.grid.nx();
  rep.ng = s.grid.ng();
  rep.nh = s.grid.nh();
  rep.n_t = config.numerics.n_t;
  rep.max_residual = r.max_fixed_point_residual;
  rep.seconds = r.seconds;
  rep.mortality_file = config.mortality_path().string();
  return rep;
}

void write_price_report(const PriceReport& r, std::ostream& out) {
  out << "v0 = " << format_double(r.v0) << "\n"
      << "u0 = " << format_double(r.u0) << "\n"
      << "grid = " << r.ny << "x" << r.nx << "x" << r.ng << "x" << r.nh << "\n"
      << "n_t = " << r.n_t << "\n"
      << "max_fixed_point_residual = " << format_double(r.max_residual) << "\n"
      << "mortality_file = " << r.mortality_file << "\n"
      << "seconds = " << r.seconds << "\n";
}

std::vector<FeeRow> run_calibrate(const RunConfig& config, int threads, std::ostream* progress) {
  config.validate();
  std::vector<FeeRow> rows;
  if (config.sweep.empty()) return rows;
  const MortalityTable mortality = MortalityTable::load(config.mortality_path());
  FeeSearch search;
  search.phi_lo = config.phi_lo_bp * 1e-4;
  search.phi_hi = config.phi_hi_bp * 1e-4;
  PricingOptions opts;
  opts.threads = threads;
  for (const auto& cell : config.sweep) {
    const MarketParams market = with_cell(config.market, cell);
    const RateLattice lattice = RateLattice::build(market, config.numerics.n_t);
    const Grid4D grid = Grid4D::build(config.numerics.grid, lattice);
    const Grid4D coarse = Grid4D::build(config.warm_start.value_or(config.numerics.grid), lattice);
    for (bool taxed : config.sweep_tax) {
      const ContractParams c = taxed ? config.contract : untaxed(config.contract);
      const FeeResult fee =
          config.warm_start
              ? fair_fee_warm(c, market, lattice, grid, coarse, mortality, config.numerics, search, opts)
              : fair_fee(c, market, lattice, grid, mortality, config.numerics, search, opts);
      const FeeEvaluation best = fee.closest();
      rows.push_back({cell, taxed, fee.phi * 1e4, best.v0, best.u0, static_cast<int>(fee.history.size())});
      if (progress)
        *progress << "r0=" << cell.r0 << " sigma=" << cell.sigma << " omega=" << cell.omega
                  << " tax=" << taxed << " phi*=" << format_double(fee.phi * 1e4) << " bp ("
                  << fee.history.size() << " pricings)" << std::endl;
    }
  }
  return rows;
}

void write_fee_csv(const std::vector<FeeRow>& rows, std::ostream& out) {
  out << "r0,sigma,omega,tax_flag,phi_star_bp\n";
  for (const auto& r : rows)
    out << format_double(r.cell.r0) << "," << format_double(r.cell.sigma) << "," << format_double(r.cell.omega)
        << "," << (r.taxed ? 1 : 0) << "," << format_double(r.phi_star_bp) << "\n";
}

std::vector<int> subsample_columns(int n, int columns) {
  std::vector<int> out;
  if (n <= columns) {
    for (int j = 0; j < n; ++j) out.push_back(j);
    return out;
  }
  for (int c = 0; c < columns; ++c) {
    const int j = static_cast<int>(std::lround(static_cast<double>(c) * (n - 1) / (columns - 1)));
    if (out.empty() || out.back() != j) out.push_back(j);
  }
  return out;
}

std::vector<PolicyRow> run_policy_surface(const RunConfig& config, const PolicyRequest& req, int threads) {
  const ContractParams& c = config.contract;
  if (req.anniversary < 1 || req.anniversary > c.maturity - 1)
    throw std::out_of_range("policy surface: anniversary must be in 1.." + std::to_string(c.maturity - 1));
  if (!(req.g >= 0 && req.g <= c.premium)) throw std::out_of_range("policy surface: g level must be in [0, P]");
  if (!(req.h >= 0 && req.h <= c.premium)) throw std::out_of_range("policy surface: h level must be in [0, P]");
  const Setup s = prepare(config, config.market);
  PricingOptions opts;
  opts.threads = threads;
  opts.record_policy = {req.anniversary};
  const PricingResult plain =
      backward_sweep(untaxed(c), config.market, s.lattice, s.grid, s.mortality, config.numerics, opts);
  const PricingResult taxed = backward_sweep(c, config.market, s.lattice, s.grid, s.mortality, config.numerics, opts);
  const ValueSurface& w0 = plain.policy.at(req.anniversary);
  const ValueSurface& w1 = taxed.policy.at(req.anniversary);
  const int ig = nearest_node(s.grid.gs, req.g);
  const int ih = nearest_node(s.grid.hs, req.h);
  const std::vector<int> cols =
      req.full ? subsample_columns(s.grid.nx(), s.grid.nx()) : subsample_columns(s.grid.nx(), config.policy_x_columns);
  const double b = beta<double>(req.anniversary, config.market);
  std::vector<PolicyRow> rows;
  for (int iy = 0; iy < s.grid.ny(); ++iy)
    for (int ix : cols)
      rows.push_back({s.grid.xs[ix], s.grid.ys[iy] + b, w0(iy, ix, ig, ih), w1(iy, ix, ig, ih)});
  return rows;
}

void write_policy_csv(const std::vector<PolicyRow>& rows, std::ostream& out) {
  out << "x,r,w_no_tax,w_with_tax,difference\n";
  for (const auto& r : rows)
    out << format_double(r.x) << "," << format_double(r.r) << "," << format_double(r.w_no_tax) << ","
        << format_double(r.w_with_tax) << "," << format_double(r.difference()) << "\n";
}

McCheckReport run_mc_check(const RunConfig& config, long paths, std::uint64_t seed, int threads) {
  const Setup s = prepare(config, config.market);
  const ContractParams c = untaxed(config.contract);
  McCheckReport rep;
  PricingOptions opts;
  opts.threads = threads;
  opts.mode = WithdrawalMode::Static;
  const PricingResult r = backward_sweep(c, config.market, s.lattice, s.grid, s.mortality, config.numerics, opts);
  rep.lattice_u0 = r.u0;
  rep.lattice_seconds = r.seconds;
  const auto t0 = std::chrono::steady_clock::now();
  rep.mc = mc_insurer_static(c, config.market, s.mortality, paths, seed, threads);
  rep.mc_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

void write_mc_report(const McCheckReport& r, std::ostream& out) {
  out << "mc_mean = " << format_double(r.mc.mean) << "\n"
      << "mc_std_error = " << format_double(r.mc.std_error) << "\n"
      << "mc_paths = " << r.mc.paths << "\n"
      << "lattice_u0 = " << format_double(r.lattice_u0) << "\n"
      << "z_score = " << format_double(r.z_score()) << "\n"
      << "lattice_seconds = " << r.lattice_seconds << "\n"
      << "mc_seconds = " << r.mc_seconds << "\n";
}

}  // namespace gmwb
