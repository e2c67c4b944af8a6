#pragma once
// Backward induction over contract anniversaries for the policyholder's
// subjective value V (with optimal withdrawals and the capital-gains
// fixed point) and the insurer's value U (which inherits the policyholder's
// withdrawals).

#include <map>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmwb/contract.hpp"
#include "gmwb/expectation.hpp"
#include "gmwb/grid.hpp"
#include "gmwb/model.hpp"
#include "gmwb/mortality.hpp"
#include "gmwb/rate_lattice.hpp"

namespace gmwb {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WithdrawalMode { Optimal, Static };

struct NumericalParams {
  int n_t = 50;
  GridSpec grid;
  double delta_w = 1.0;
};

struct PricingOptions {
  int threads = 1;
  WithdrawalMode mode = WithdrawalMode::Optimal;
  /// Anniversaries (1..T-1) whose withdrawal policy is kept in the result.
  std::vector<int> record_policy;
  /// Without taxes nothing depends on H, so the sweep may run on a two-node
  /// H axis and broadcast. The answer agrees with the full sweep to rounding.
  bool collapse_untaxed_h = true;
};

struct PricingResult {
  double v0 = 0;
  double u0 = 0;
  /// Optimal withdrawal per grid point, for each recorded anniversary.
  std::map<int, ValueSurface> policy;
  /// Largest |v - f(v)| seen across all fixed-point solves.
  double max_fixed_point_residual = 0;
  double seconds = 0;
};

// ---------------------------------------------------------------------------
// Point-level building blocks

struct FixedPointResult {
  double value = 0;
  int iterations = 0;
  double residual = 0;
};

/// f(v) = sum_k a_k (F_k + c (F_k - v)_+) with c = kappa / (1 - kappa).
double subjective_map(std::span<const double> weight, std::span<const double> payoff, double kappa, double v);

/// Unique root of v = f(v). f is nonincreasing, so the root is bracketed by
/// [f without the kappa term, f of that]. Newton steps from the left end of
/// the bracket (exact for this convex piecewise-linear residual) with
/// bisection as a fallback; stops when the bracket is below `tol`.
FixedPointResult solve_fixed_point(std::span<const double> weight, std::span<const double> payoff,
                                   double kappa, double tol, int max_iterations = 200);

struct WithdrawalChoice {
  double w = 0;
  double value = 0;
};

/// Right-hand side of the anniversary jump for withdrawal w: continuation
/// V+ at the post-withdrawal state plus the net cash (gross of tax when
/// `after_tax` is false).
double withdrawal_value(const Grid4D& grid, const ValueSurface& plus, int iy, const PolicyState& s, double w,
                        const WithdrawalTerms& terms, bool after_tax = true);

/// Candidate set {n dw} u {g_w, g_w + 1e-6, W_max}, intersected with [0, W_max].
std::vector<double> withdrawal_candidates(const PolicyState& s, double g_w, double delta_w);

/// Best withdrawal over the candidate set; ties go to the smaller amount.
/// Skips candidates that provably cannot beat their neighbours.
WithdrawalChoice optimize_withdrawal(const Grid4D& grid, const ValueSurface& v_plus, int iy, int ix, int ig, int ih,
                                     const WithdrawalTerms& terms, double delta_w);

/// Same search, evaluating every candidate.
WithdrawalChoice optimize_withdrawal_exhaustive(const Grid4D& grid, const ValueSurface& v_plus, int iy, int ix,
                                                int ig, int ih, const WithdrawalTerms& terms, double delta_w);

/// optimize_withdrawal at every G node of one (rate state, X, H) column,
/// sharing the work that does not depend on G. out.size() == grid.ng().
void optimize_withdrawal_column(const Grid4D& grid, const ValueSurface& v_plus, int iy, int ix, int ih,
                                const WithdrawalTerms& terms, double delta_w, std::span<WithdrawalChoice> out);

/// Insurer value before the withdrawal w chosen by the policyholder.
double insurer_minus(const Grid4D& grid, const ValueSurface& u_plus, int iy, int ix, int ig, int ih, double w,
                     const WithdrawalTerms& terms);

/// Cache-line aligned storage for the vectorised kernels.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};
using AlignedVector = std::vector<double, AlignedAllocator<double>>;

/// Scratch buffers for plus_step, reused across anniversaries.
struct PlusWorkspace {
  AlignedVector packed;  // V, U and their X second derivatives, blocked by (g, h) lanes
};

/// Values just after the withdrawal at the plan's anniversary, for every grid
/// point, from the surfaces V-, U- of the next anniversary. Returns the
/// largest fixed-point residual.
double plus_step(const ExpectationPlan& plan, const Grid4D& grid, const ValueSurface& next_v,
                 const ValueSurface& next_u, double q, const ContractParams& contract, int threads,
                 ValueSurface& v_plus, ValueSurface& u_plus, PlusWorkspace* workspace = nullptr);

/// Plus-step values at a single source (rate state m, account value x) and
/// node pair (ig, ih), computed straight from the definitions with a
/// one-dimensional spline per destination. Slow; used as a cross-check.
struct PlusValues {
  double v = 0;
  double u = 0;
};
PlusValues plus_values_reference(const ExpectationPlan& plan, const Grid4D& grid, const ValueSurface& next_v,
                                 const ValueSurface& next_u, int m, double x, int ig, int ih, double q,
                                 const ContractParams& contract);

/// Values just before the withdrawal (and, optionally, the withdrawal taken)
/// at every grid point.
void minus_step(const Grid4D& grid, const ValueSurface& v_plus, const ValueSurface& u_plus,
                const WithdrawalTerms& terms, WithdrawalMode mode, double delta_w, int threads,
                ValueSurface& v_minus, ValueSurface& u_minus, ValueSurface* policy = nullptr);

// ---------------------------------------------------------------------------

/// Full backward sweep; returns V(0, r0, P, P, P) and U(0, r0, P, P, P).
PricingResult backward_sweep(const ContractParams& contract, const MarketParams& market,
                             const RateLattice& lattice, const Grid4D& grid, const MortalityTable& mortality,
                             const NumericalParams& numerics, const PricingOptions& options = {});

}  // namespace gmwb
