#pragma once
// Flat "key = value" run configuration with '#' comments.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmwb/calibrate.hpp"
#include "gmwb/contract.hpp"
#include "gmwb/model.hpp"
#include "gmwb/pricer.hpp"

namespace gmwb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MarketCell {
  double r0 = 0.03;
  double sigma = 0.16;
  double omega = 0.05;
  bool operator==(const MarketCell&) const = default;
};

struct RunConfig {
  ContractParams contract;
  MarketParams market;
  NumericalParams numerics;
  std::string mortality_file = "data/ssa2007_male.csv";
  /// Market cells for the fee sweep, crossed with `sweep_tax`.
  std::vector<MarketCell> sweep;
  std::vector<bool> sweep_tax{false, true};
  double phi_lo_bp = 0;
  double phi_hi_bp = 150;
  /// Calibrate on this grid first and warm-start the secant on the real one.
  std::optional<GridSpec> warm_start;
  int policy_x_columns = 200;
  /// Directory that relative paths are resolved against.
  std::filesystem::path base_dir;

  static RunConfig parse(const std::string& text, const std::string& source = "<memory>");
  static RunConfig load(const std::filesystem::path& path);
  std::string serialize() const;
  void validate() const;
  std::filesystem::path mortality_path() const;
  bool operator==(const RunConfig& o) const;
};

/// Shortest round-trip decimal form, independent of locale.
std::string format_double(double v);

}  // namespace gmwb
