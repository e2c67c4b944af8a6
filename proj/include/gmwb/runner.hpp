#pragma once
// Run orchestration behind the command-line tool: each run reads a RunConfig,
// delegates to the library and writes CSV / text reports.

#include <iosfwd>
#include <string>
#include <vector>

#include "gmwb/config.hpp"
#include "gmwb/mc_oracle.hpp"

namespace gmwb {

struct PriceReport {
  double v0 = 0;
  double u0 = 0;
  int ny = 0, nx = 0, ng = 0, nh = 0, n_t = 0;
  double max_residual = 0;
  double seconds = 0;
  std::string mortality_file;
};

PriceReport run_price(const RunConfig& config, int threads = 1);
void write_price_report(const PriceReport& report, std::ostream& out);

struct FeeRow {
  MarketCell cell;
  bool taxed = false;
  double phi_star_bp = 0;
  /// Values at the evaluated fee closest to phi*.
  double v0 = 0;
  double u0 = 0;
  int pricings = 0;
};

/// Fair fee for every sweep cell crossed with every tax flag. Taxed rows use
/// the configured tau and kappa; untaxed rows set both to zero. `progress`
/// receives one line per finished row when non-null.
std::vector<FeeRow> run_calibrate(const RunConfig& config, int threads = 1, std::ostream* progress = nullptr);
void write_fee_csv(const std::vector<FeeRow>& rows, std::ostream& out);

struct PolicyRequest {
  int anniversary = 12;
  double g = 50;
  double h = 50;
  bool full = false;  // every X node instead of the subsampled mesh
};

struct PolicyRow {
  double x = 0;
  double r = 0;
  double w_no_tax = 0;
  double w_with_tax = 0;
  double difference() const { return w_no_tax - w_with_tax; }
};

/// Optimal withdrawals at one anniversary over (x, r) for fixed (g, h) (the
/// nearest grid nodes), without taxes and with the configured tax rates, both
/// at the configured fee.
std::vector<PolicyRow> run_policy_surface(const RunConfig& config, const PolicyRequest& request, int threads = 1);
void write_policy_csv(const std::vector<PolicyRow>& rows, std::ostream& out);

/// X-node indices kept in a subsampled output mesh of at most `columns`.
std::vector<int> subsample_columns(int n, int columns);

struct McCheckReport {
  McEstimate mc;
  double lattice_u0 = 0;
  double z_score() const { return mc.std_error > 0 ? (lattice_u0 - mc.mean) / mc.std_error : 0.0; }
  double lattice_seconds = 0;
  double mc_seconds = 0;
};

/// Static-withdrawal, untaxed insurer value by Monte Carlo and by the lattice
/// with the policy forced static.
McCheckReport run_mc_check(const RunConfig& config, long paths, std::uint64_t seed, int threads = 1);
void write_mc_report(const McCheckReport& report, std::ostream& out);

}  // namespace gmwb
