#pragma once
// Monte Carlo value of the insurer's position under the static withdrawal
// strategy w_i = min(g_w, G_i) without taxes. Each year is drawn exactly from
// the joint Gaussian law of (Y, ln X, int r), so the estimator has no
// time-discretisation bias.

#include <cstdint>

#include "gmwb/contract.hpp"
#include "gmwb/model.hpp"
#include "gmwb/mortality.hpp"

namespace gmwb {

struct McEstimate {
  double mean = 0;
  double std_error = 0;
  long paths = 0;
};

/// Counter-based stream: standard normals for (seed, path, year) do not
/// depend on how paths are scheduled.
Vector3<double> normal_triplet(std::uint64_t seed, std::uint64_t path, std::uint64_t year);

/// Taxes in `contract` are ignored. Paths are summed in blocks of fixed size
/// and the blocks are combined in index order, so the estimate is
/// bit-identical for any thread count.
McEstimate mc_insurer_static(const ContractParams& contract, const MarketParams& market,
                             const MortalityTable& mortality, long n_paths, std::uint64_t seed, int threads = 1);

}  // namespace gmwb
