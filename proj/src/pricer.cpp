#include "gmwb/pricer.hpp"

#include <algorithm>
#include <cstdint>
#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include "gmwb/parallel.hpp"

namespace gmwb {

namespace {

struct MapPass {
  double excess = 0;  // sum_k a_k (F_k - v)_+
  double active = 0;  // sum of a_k over F_k > v
};

MapPass map_pass(std::span<const double> a, std::span<const double> f, double v) {
  MapPass p;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = f[k] - v;
    if (d > 0) {
      p.excess += a[k] * d;
      p.active += a[k];
    }
  }
  return p;
}

double weighted_sum(std::span<const double> a, std::span<const double> f) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * f[k];
  return s;
}

[[noreturn]] void no_convergence(int max_iterations, double lo, double hi) {
  std::ostringstream os;
  os << "fixed point: no convergence after " << max_iterations << " iterations (bracket [" << lo << ", " << hi
     << "])";
  throw SolverError(os.str());
}

// Newton iterate with a bisection fallback; shared by the scalar and the
// lane-parallel solver so both follow the same sequence.
inline double newton_next(double v, double g, double active, double c, double lo, double hi) {
  const double next = v - g / (-1 - c * active);
  return next > lo && next < hi ? next : 0.5 * (lo + hi);
}

}  // namespace

double subjective_map(std::span<const double> a, std::span<const double> f, double kappa, double v) {
  const double c = kappa / (1 - kappa);
  return weighted_sum(a, f) + c * map_pass(a, f, v).excess;
}

FixedPointResult solve_fixed_point(std::span<const double> a, std::span<const double> f, double kappa,
                                   double tol, int max_iterations) {
  FixedPointResult r;
  const double base = weighted_sum(a, f);
  r.value = base;
  if (kappa == 0) return r;
  const double c = kappa / (1 - kappa);
  // g(v) = base + c excess(v) - v is convex, piecewise linear and strictly
  // decreasing; g(base) >= 0 >= g(base + c excess(base)).
  MapPass p = map_pass(a, f, base);
  double lo = base, hi = base + c * p.excess, v = base, g = c * p.excess;
  while (g != 0 && hi - lo > tol) {
    if (++r.iterations > max_iterations) no_convergence(max_iterations, lo, hi);
    const double next = newton_next(v, g, p.active, c, lo, hi);
    // A step below tol means v already solves to within tol (1 + c active).
    if (std::abs(next - v) <= tol) break;
    v = next;
    p = map_pass(a, f, v);
    g = base + c * p.excess - v;
    (g >= 0 ? lo : hi) = v;
  }
  r.value = v;
  r.residual = std::abs(g);
  return r;
}

// ---------------------------------------------------------------------------
// Withdrawal decision

double withdrawal_value(const Grid4D& grid, const ValueSurface& plus, int iy, const PolicyState& s, double w,
                        const WithdrawalTerms& terms, bool after_tax) {
  const WithdrawalOutcome o = withdraw(s, w, terms);
  const double cont = trilinear(grid, plus, iy, o.after.x, o.after.g, o.after.h);
  return cont + (after_tax ? o.cash.net() : o.cash.gross());
}

std::vector<double> withdrawal_candidates(const PolicyState& s, double g_w, double delta_w) {
  const double wmax = std::max(s.x, std::min(g_w, s.g));
  std::vector<double> out;
  for (long n = 0;; ++n) {
    const double w = n * delta_w;
    if (w > wmax) break;
    out.push_back(w);
  }
  for (double w : {g_w, g_w + 1e-6, wmax})
    if (w >= 0 && w <= wmax) out.push_back(w);
  return out;
}

namespace {

struct UniformAxis {
  double step;
  int intervals;
};

inline double jump_value(const ValueSurface& plus, int iy, const Cell& cx, const UniformAxis& ga,
                         const UniformAxis& ha, const WithdrawalOutcome& o) {
  const Cell cg = locate_uniform(o.after.g, ga.step, ga.intervals);
  const Cell ch = locate_uniform(o.after.h, ha.step, ha.intervals);
  return trilinear(plus, iy, cx, cg, ch) + o.cash.net();
}

// Moves the X cell down while the queried account value decreases.
inline Cell walk_cell(std::span<const double> xs, int& j, double v) {
  while (j > 0 && xs[j] > v) --j;
  return {j, (v - xs[j]) / (xs[j + 1] - xs[j])};
}

}  // namespace

WithdrawalChoice optimize_withdrawal_exhaustive(const Grid4D& grid, const ValueSurface& v_plus, int iy, int ix,
                                                int ig, int ih, const WithdrawalTerms& terms, double delta_w) {
  const PolicyState s{grid.xs[ix], grid.gs[ig], grid.hs[ih]};
  WithdrawalChoice best{0, -std::numeric_limits<double>::infinity()};
  for (double w : withdrawal_candidates(s, terms.g_w, delta_w)) {
    const double value = withdrawal_value(grid, v_plus, iy, s, w, terms, true);
    if (value > best.value || (value == best.value && w < best.w)) best = {w, value};
  }
  return best;
}

WithdrawalChoice optimize_withdrawal(const Grid4D& grid, const ValueSurface& v_plus, int iy, int ix, int ig, int ih,
                                     const WithdrawalTerms& terms, double delta_w) {
  const PolicyState s{grid.xs[ix], grid.gs[ig], grid.hs[ih]};
  const std::span<const double> xs = as_span(grid.xs);
  const UniformAxis ga{grid.gs[1] - grid.gs[0], grid.ng() - 1};
  const UniformAxis ha{grid.hs[1] - grid.hs[0], grid.nh() - 1};
  const double wmax = std::max(s.x, std::min(terms.g_w, s.g));

  WithdrawalChoice best{0, -std::numeric_limits<double>::infinity()};
  auto consider = [&](double w, double value) {
    if (value > best.value || (value == best.value && w < best.w)) best = {w, value};
  };

  // For G <= w <= (x - H)+ the benefit base is exhausted and the tax base is
  // untouched, so only X moves. There the objective is piecewise linear in w,
  // with kinks where x - w crosses an X node and where the tax cap starts to
  // bind, and its maximum over the candidate grid is attained next to a kink
  // or at an end of the range (the smallest maximiser included). Candidates
  // strictly between those are skipped.
  thread_local std::vector<long> keep;
  keep.clear();
  long n_lo = static_cast<long>(std::ceil(s.g / delta_w));
  long n_hi = static_cast<long>(std::floor(positive_part(s.x - s.h) / delta_w));
  while (n_lo * delta_w < s.g) ++n_lo;
  while (n_hi >= 0 && n_hi * delta_w > positive_part(s.x - s.h)) --n_hi;
  const bool skip = n_hi - n_lo > 1;
  if (skip) {
    auto add = [&](double w) {
      const double k = w / delta_w;
      for (double n : {std::floor(k), std::ceil(k)})
        if (n > n_lo && n < n_hi) keep.push_back(static_cast<long>(n));
    };
    for (int j = ix; j >= 0; --j) {
      const double w = s.x - xs[j];
      if (w > n_hi * delta_w) break;
      if (w > n_lo * delta_w) add(w);
    }
    const double m = std::min(terms.g_w, s.g);
    const double gain = positive_part(s.x - s.h);
    if (terms.tau > 0 && terms.penalty < 1 && terms.surrender < 1)
      add((gain / (1 - terms.penalty) - terms.surrender * m) / (1 - terms.surrender));
    keep.push_back(n_hi);
    std::sort(keep.begin(), keep.end());
  }

  // Inside the skipped range the continuation is read off the (G = 0, H = h)
  // line directly.
  const double* flat = v_plus.data() + v_plus.line_offset(iy, 0, ih);
  int j = std::min(ix, grid.nx() - 2);
  auto next_kept = keep.begin();
  for (long n = 0;; ++n) {
    const bool inside = skip && n > n_lo && n < n_hi;
    if (inside) {
      while (*next_kept < n) ++next_kept;
      n = *next_kept;
    }
    const double w = n * delta_w;
    if (w > wmax) break;
    const WithdrawalOutcome o = withdraw(s, w, terms);
    const Cell cx = walk_cell(xs, j, o.after.x);
    if (inside && n < n_hi)
      consider(w, lerp(flat[cx.index], flat[cx.index + 1], cx.frac) + o.cash.net());
    else
      consider(w, jump_value(v_plus, iy, cx, ga, ha, o));
  }
  for (double w : {terms.g_w, terms.g_w + 1e-6, wmax}) {
    if (!(w >= 0 && w <= wmax)) continue;
    const WithdrawalOutcome o = withdraw(s, w, terms);
    consider(w, jump_value(v_plus, iy, locate(xs, o.after.x), ga, ha, o));
  }
  return best;
}

void optimize_withdrawal_column(const Grid4D& grid, const ValueSurface& v_plus, int iy, int ix, int ih,
                                const WithdrawalTerms& terms, double delta_w, std::span<WithdrawalChoice> out) {
  const int ng = grid.ng();
  const std::span<const double> xs = as_span(grid.xs);
  const UniformAxis ga{grid.gs[1] - grid.gs[0], ng - 1};
  const UniformAxis ha{grid.hs[1] - grid.hs[0], grid.nh() - 1};
  const double x = grid.xs[ix], h = grid.hs[ih], gain = positive_part(x - h);
  auto lowest_above = [&](double g) {
    long n = static_cast<long>(std::ceil(g / delta_w));
    while (n * delta_w < g) ++n;
    return n;
  };
  long n_hi = static_cast<long>(std::floor(gain / delta_w));
  while (n_hi >= 0 && n_hi * delta_w > gain) --n_hi;

  // Below g_w the fee base depends on G, so those nodes are searched alone.
  int ig0 = 0;
  while (ig0 < ng && grid.gs[ig0] < terms.g_w) ++ig0;
  auto per_point = [&](int ig) { out[ig] = optimize_withdrawal(grid, v_plus, iy, ix, ig, ih, terms, delta_w); };
  for (int ig = 0; ig < ig0; ++ig) per_point(ig);
  if (ig0 == ng) return;
  const long n_lo0 = lowest_above(grid.gs[ig0]);
  if (n_hi - n_lo0 <= 1) {
    for (int ig = ig0; ig < ng; ++ig) per_point(ig);
    return;
  }

  // For G >= g_w and w > G the benefit base is exhausted and the fee no
  // longer depends on G, so every candidate above G has the same value for
  // all such nodes. The linear range (G, (x - H)+] is reduced to its kept
  // candidates (see optimize_withdrawal) for the widest range, with a suffix
  // maximum giving the best one above each node's own G; everything above
  // (x - H)+ is searched once.
  const PolicyState shared{x, grid.gs[ig0], h};
  WithdrawalChoice none{0, -std::numeric_limits<double>::infinity()};
  auto better = [](const WithdrawalChoice& a, const WithdrawalChoice& b) {
    return a.value > b.value || (a.value == b.value && a.w < b.w);
  };
  thread_local std::vector<long> keep;
  thread_local std::vector<WithdrawalChoice> suffix;
  keep.clear();
  auto add = [&](double w) {
    const double k = w / delta_w;
    for (double n : {std::floor(k), std::ceil(k)})
      if (n > n_lo0 && n < n_hi) keep.push_back(static_cast<long>(n));
  };
  for (int j = ix; j >= 0; --j) {
    const double w = x - xs[j];
    if (w > n_hi * delta_w) break;
    if (w > n_lo0 * delta_w) add(w);
  }
  if (terms.tau > 0 && terms.penalty < 1 && terms.surrender < 1)
    add((gain / (1 - terms.penalty) - terms.surrender * terms.g_w) / (1 - terms.surrender));
  keep.push_back(n_hi);
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());

  const double* flat = v_plus.data() + v_plus.line_offset(iy, 0, ih);
  const double* plane = flat;
  const std::size_t g_stride = static_cast<std::size_t>(grid.nh()) * grid.nx();
  suffix.assign(keep.size() + 1, none);
  int j = std::min(ix, grid.nx() - 2);
  std::vector<WithdrawalChoice> values(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const double w = keep[i] * delta_w;
    const WithdrawalOutcome o = withdraw(shared, w, terms);
    const Cell cx = walk_cell(xs, j, o.after.x);
    values[i] = {w, lerp(flat[cx.index], flat[cx.index + 1], cx.frac) + o.cash.net()};
  }
  for (std::size_t i = keep.size(); i-- > 0;)
    suffix[i] = better(values[i], suffix[i + 1]) ? values[i] : suffix[i + 1];

  WithdrawalChoice top = none;
  for (long n = n_hi + 1;; ++n) {
    const double w = n * delta_w;
    if (w > x) break;
    const WithdrawalOutcome o = withdraw(shared, w, terms);
    const WithdrawalChoice c{w, jump_value(v_plus, iy, walk_cell(xs, j, o.after.x), ga, ha, o)};
    if (better(c, top)) top = c;
  }
  {
    const WithdrawalOutcome o = withdraw(shared, x, terms);
    const WithdrawalChoice c{x, jump_value(v_plus, iy, locate(xs, o.after.x), ga, ha, o)};
    if (better(c, top)) top = c;
  }

  for (int ig = ig0; ig < ng; ++ig) {
    const long n_lo = lowest_above(grid.gs[ig]);
    if (n_hi - n_lo <= 1) {
      per_point(ig);
      continue;
    }
    const PolicyState s{x, grid.gs[ig], h};
    WithdrawalChoice best = top;
    auto consider = [&](double w) {
      const WithdrawalOutcome o = withdraw(s, w, terms);
      const WithdrawalChoice c{w, jump_value(v_plus, iy, locate(xs, o.after.x), ga, ha, o)};
      if (better(c, best)) best = c;
    };
    // Up to G the tax base stays on its node (w <= G < (x - H)+), so the
    // continuation is bilinear in (X, G).
    int jl = std::min(ix, grid.nx() - 2);
    for (long n = 0; n <= n_lo; ++n) {
      const double w = n * delta_w;
      const WithdrawalOutcome o = withdraw(s, w, terms);
      const Cell cx = walk_cell(xs, jl, o.after.x);
      const Cell cg = locate_uniform(o.after.g, ga.step, ga.intervals);
      const double* p = plane + cg.index * g_stride + cx.index;
      const double cont = lerp(lerp(p[0], p[1], cx.frac), lerp(p[g_stride], p[g_stride + 1], cx.frac), cg.frac);
      const WithdrawalChoice c{w, cont + o.cash.net()};
      if (better(c, best)) best = c;
    }
    consider(terms.g_w);
    consider(terms.g_w + 1e-6);
    const auto first = std::upper_bound(keep.begin(), keep.end(), n_lo) - keep.begin();
    if (better(suffix[first], best)) best = suffix[first];
    out[ig] = best;
  }
}

double insurer_minus(const Grid4D& grid, const ValueSurface& u_plus, int iy, int ix, int ig, int ih, double w,
                     const WithdrawalTerms& terms) {
  const PolicyState s{grid.xs[ix], grid.gs[ig], grid.hs[ih]};
  return withdrawal_value(grid, u_plus, iy, s, w, terms, false);
}

void minus_step(const Grid4D& grid, const ValueSurface& v_plus, const ValueSurface& u_plus,
                const WithdrawalTerms& terms, WithdrawalMode mode, double delta_w, int threads,
                ValueSurface& v_minus, ValueSurface& u_minus, ValueSurface* policy) {
  const int ng = grid.ng(), nh = grid.nh(), nx = grid.nx();
  const std::size_t columns = static_cast<std::size_t>(grid.ny()) * nx * nh;
  parallel_for(columns, threads, [&](std::size_t b, std::size_t e, int) {
    std::vector<WithdrawalChoice> choices(ng);
    for (std::size_t l = b; l < e; ++l) {
      const int iy = static_cast<int>(l / (static_cast<std::size_t>(nx) * nh));
      const int ix = static_cast<int>((l / nh) % nx);
      const int ih = static_cast<int>(l % nh);
      if (mode == WithdrawalMode::Optimal) {
        optimize_withdrawal_column(grid, v_plus, iy, ix, ih, terms, delta_w, std::span<WithdrawalChoice>(choices));
      } else {
        for (int ig = 0; ig < ng; ++ig) {
          const PolicyState s{grid.xs[ix], grid.gs[ig], grid.hs[ih]};
          choices[ig].w = std::min(terms.g_w, s.g);
          choices[ig].value = withdrawal_value(grid, v_plus, iy, s, choices[ig].w, terms, true);
        }
      }
      for (int ig = 0; ig < ng; ++ig) {
        const WithdrawalChoice& choice = choices[ig];
        v_minus(iy, ix, ig, ih) = choice.value;
        u_minus(iy, ix, ig, ih) = insurer_minus(grid, u_plus, iy, ix, ig, ih, choice.w, terms);
        if (policy) (*policy)(iy, ix, ig, ih) = choice.w;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Expectation step
//
// The next-anniversary surfaces are repacked so that kLanes (g, h) pairs of a
// given (rate state, X node) are contiguous. A destination of the refined
// tree then costs one short vector operation per block of (g, h) lanes, and
// the fixed points of a block are solved in lockstep, each lane following
// the steps of solve_fixed_point.

namespace {

constexpr int kLanes = 8;
constexpr int kTile = 64;  // sources sharing one pass over the (g, h) blocks

// One value per (g, h) lane.
using Lanes = double __attribute__((vector_size(kLanes * sizeof(double))));

inline Lanes load(const double* p) {
  Lanes r;
  std::memcpy(&r, p, sizeof r);
  return r;
}
inline void store(double* p, const Lanes& v) { std::memcpy(p, &v, sizeof v); }
inline Lanes splat(double x) { return Lanes{} + x; }

struct Destination {
  std::size_t row;  // iy * NX + j
  double weight, account, wy0, wy1, wm0, wm1;
};

// Packed layout: lane block, rate state, X node, then {V, V'', U, U''} of
// kLanes (g, h) lanes each. Nodes j and j + 1 of one destination are then a
// single contiguous run, and one lane block stays cache resident.
constexpr std::size_t kFields = 4;
constexpr std::size_t kNode = kFields * kLanes;

std::size_t lane_blocks(const Grid4D& grid) {
  const std::size_t ngh = static_cast<std::size_t>(grid.ng()) * grid.nh();
  return (ngh + kLanes - 1) / kLanes;
}

void prepare_workspace(const Grid4D& grid, const NaturalSpline& spline, const ValueSurface& next_v,
                       const ValueSurface& next_u, int threads, PlusWorkspace& ws) {
  const std::size_t nx = grid.nx(), ny = grid.ny();
  const std::size_t ngh = static_cast<std::size_t>(grid.ng()) * grid.nh();
  const std::size_t blocks = lane_blocks(grid);
  ws.packed.assign(blocks * ny * nx * kNode, 0.0);
  parallel_for(blocks, threads, [&](std::size_t b, std::size_t e, int) {
    std::vector<double> second(nx);
    for (std::size_t blk = b; blk < e; ++blk)
      for (std::size_t iy = 0; iy < ny; ++iy) {
        double* out = ws.packed.data() + (blk * ny + iy) * nx * kNode;
        for (std::size_t l = 0; l < kLanes; ++l) {
          const std::size_t gh = blk * kLanes + l;
          if (gh >= ngh) break;
          const ValueSurface* src[2] = {&next_v, &next_u};
          for (int a = 0; a < 2; ++a) {
            const double* line = src[a]->data() + (iy * ngh + gh) * nx;
            spline.second_derivatives({line, nx}, second);
            for (std::size_t ix = 0; ix < nx; ++ix) {
              out[ix * kNode + (2 * a) * kLanes + l] = line[ix];
              out[ix * kNode + (2 * a + 1) * kLanes + l] = second[ix];
            }
          }
        }
      }
  });
}

void build_destinations(const ExpectationPlan& plan, const NaturalSpline& spline, int nx, int m, double x,
                        std::vector<Destination>& out) {
  const auto terms = plan.terms(m);
  out.resize(terms.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const auto& t = terms[k];
    const double xd = x > 0 ? x * t.growth : 0.0;
    const NaturalSpline::Weights w = spline.weights(xd);
    out[k] = {static_cast<std::size_t>(t.iy) * nx + w.j, t.weight, xd, w.wy0, w.wy1, w.wm0, w.wm1};
  }
}

struct LaneBlock {
  std::array<double, kLanes> v{}, u{}, residual{};
};

// First half of the expectation for one source over one packed lane block;
// `h` holds the tax base of each lane. Terms are summed in plan order and
// the per-term payoffs are kept in f for the fixed point.
void accumulate_source(const std::vector<Destination>& dest, const double* block, const double* h, double q,
                       const ContractParams& c, AlignedVector& f, Lanes& base, Lanes& eu) {
  const std::size_t n = dest.size();
  f.resize(n * kLanes);
  const Lanes hl = load(h), zero = splat(0.0), tau = splat(c.tau), qv = splat(q), pv = splat(1 - q);
  Lanes bs = zero, es = zero;
  for (std::size_t k = 0; k < n; ++k) {
    const Destination& d = dest[k];
    const Lanes wy0 = splat(d.wy0), wy1 = splat(d.wy1), wm0 = splat(d.wm0), wm1 = splat(d.wm1);
    const Lanes a = splat(d.weight), xd = splat(d.account);
    const double* at = block + d.row * kNode;
    const Lanes su = wy0 * load(at + 2 * kLanes) + wy1 * load(at + kNode + 2 * kLanes) + wm0 * load(at + 3 * kLanes) +
                     wm1 * load(at + kNode + 3 * kLanes);
    es += a * (qv * xd + pv * su);
    const Lanes sv = wy0 * load(at) + wy1 * load(at + kNode) + wm0 * load(at + kLanes) + wm1 * load(at + kNode + kLanes);
    const Lanes gain = xd - hl;
    const Lanes fl = qv * (xd - tau * (gain > 0 ? gain : zero)) + pv * sv;
    store(f.data() + k * kLanes, fl);
    bs += a * fl;
  }
  base = bs;
  eu = es;
}

// Second half: the capital-gains fixed point of each lane from the payoffs f.
LaneBlock solve_block(const std::vector<Destination>& dest, const double* f, const Lanes& base, const Lanes& eu,
                      const ContractParams& c, double tol) {
  const std::size_t n = dest.size();
  const Lanes zero = splat(0.0);
  LaneBlock out;
  for (int l = 0; l < kLanes; ++l) {
    out.u[l] = eu[l];
    out.v[l] = base[l];
  }
  if (c.kappa == 0) return out;

  // Lockstep version of solve_fixed_point.
  const double cc = c.kappa / (1 - c.kappa);
  Lanes ex = zero, act = zero, v = base;
  std::array<double, kLanes> lo = out.v, hi{}, g{};
  std::array<bool, kLanes> done{};
  std::array<int, kLanes> iters{};
  auto pass = [&] {
    // Four partial sums keep the add latency off the critical path.
    Lanes e[4] = {zero, zero, zero, zero}, t[4] = {zero, zero, zero, zero};
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4)
      for (int r = 0; r < 4; ++r) {
        const Lanes a = splat(dest[k + r].weight);
        const Lanes d = load(f + (k + r) * kLanes) - v;
        e[r] += d > 0 ? a * d : zero;
        t[r] += d > 0 ? a : zero;
      }
    for (; k < n; ++k) {
      const Lanes a = splat(dest[k].weight);
      const Lanes d = load(f + k * kLanes) - v;
      e[0] += d > 0 ? a * d : zero;
      t[0] += d > 0 ? a : zero;
    }
    ex = (e[0] + e[1]) + (e[2] + e[3]);
    act = (t[0] + t[1]) + (t[2] + t[3]);
  };
  pass();
  for (int l = 0; l < kLanes; ++l) {
    g[l] = cc * ex[l];
    hi[l] = lo[l] + g[l];
  }
  while (true) {
    bool any = false;
    for (int l = 0; l < kLanes; ++l) {
      if (done[l]) continue;
      if (g[l] == 0 || hi[l] - lo[l] <= tol) {
        done[l] = true;
        continue;
      }
      if (++iters[l] > 200) no_convergence(200, lo[l], hi[l]);
      const double next = newton_next(v[l], g[l], act[l], cc, lo[l], hi[l]);
      if (std::abs(next - v[l]) <= tol) {
        done[l] = true;
        continue;
      }
      v[l] = next;
      any = true;
    }
    if (!any) break;
    pass();
    for (int l = 0; l < kLanes; ++l) {
      if (done[l]) continue;
      g[l] = base[l] + cc * ex[l] - v[l];
      (g[l] >= 0 ? lo[l] : hi[l]) = v[l];
    }
  }
  for (int l = 0; l < kLanes; ++l) {
    out.residual[l] = std::abs(g[l]);
    out.v[l] = v[l];
  }
  return out;
}

}  // namespace

double plus_step(const ExpectationPlan& plan, const Grid4D& grid, const ValueSurface& next_v,
                 const ValueSurface& next_u, double q, const ContractParams& c, int threads,
                 ValueSurface& v_plus, ValueSurface& u_plus, PlusWorkspace* workspace) {
  PlusWorkspace local;
  PlusWorkspace& ws = workspace ? *workspace : local;
  const int ny = grid.ny(), nx = grid.nx(), nh = grid.nh();
  const std::size_t ngh = static_cast<std::size_t>(grid.ng()) * nh;
  const std::size_t blocks = lane_blocks(grid);
  const std::size_t block_size = static_cast<std::size_t>(ny) * nx * kNode;
  const NaturalSpline spline(as_span(grid.xs));
  prepare_workspace(grid, spline, next_v, next_u, threads, ws);

  std::vector<double> h_lane(blocks * kLanes, 0.0);
  for (std::size_t gh = 0; gh < ngh; ++gh) h_lane[gh] = grid.hs[gh % nh];
  const double tol = 1e-9 * c.premium;
  const int tiles = (nx + kTile - 1) / kTile;
  std::vector<double> residual(static_cast<std::size_t>(std::max(threads, 1)), 0.0);

  parallel_for(static_cast<std::size_t>(ny) * tiles, threads, [&](std::size_t b, std::size_t e, int worker) {
    std::array<std::vector<Destination>, kTile> dest;
    AlignedVector f;
    for (std::size_t unit = b; unit < e; ++unit) {
      const int m = static_cast<int>(unit / tiles);
      const int ix0 = static_cast<int>(unit % tiles) * kTile;
      const int count = std::min(kTile, nx - ix0);
      for (int s = 0; s < count; ++s) build_destinations(plan, spline, nx, m, grid.xs[ix0 + s], dest[s]);
      for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::size_t c0 = blk * kLanes;
        const int lanes = static_cast<int>(std::min<std::size_t>(kLanes, ngh - c0));
        for (int s = 0; s < count; ++s) {
          LaneBlock r;
          try {
            Lanes base, eu;
            accumulate_source(dest[s], ws.packed.data() + blk * block_size, h_lane.data() + c0, q, c, f, base, eu);
            r = solve_block(dest[s], f.data(), base, eu, c, tol);
          } catch (const SolverError& err) {
            std::ostringstream os;
            os << err.what() << " at anniversary " << plan.anniversary() << ", rate state " << m << ", X node "
               << ix0 + s;
            throw SolverError(os.str());
          }
          for (int l = 0; l < lanes; ++l) {
            const std::size_t at = (static_cast<std::size_t>(m) * ngh + c0 + l) * nx + ix0 + s;
            v_plus.data()[at] = r.v[l];
            u_plus.data()[at] = r.u[l];
            residual[worker] = std::max(residual[worker], r.residual[l]);
          }
        }
      }
    }
  });
  return *std::max_element(residual.begin(), residual.end());
}

PlusValues plus_values_reference(const ExpectationPlan& plan, const Grid4D& grid, const ValueSurface& next_v,
                                 const ValueSurface& next_u, int m, double x, int ig, int ih, double q,
                                 const ContractParams& c) {
  const double h = grid.hs[ih], p = 1 - q;
  const auto xs = as_span(grid.xs);
  std::vector<double> a, f;
  PlusValues out;
  for (const auto& t : plan.terms(m)) {
    const double xd = x * t.growth;
    const double sv = spline_1d(xs, next_v.line(t.iy, ig, ih), xd);
    const double su = spline_1d(xs, next_u.line(t.iy, ig, ih), xd);
    a.push_back(t.weight);
    f.push_back(q * death_benefit({xd, 0, h}, c.tau) + p * sv);
    out.u += t.weight * (q * xd + p * su);
  }
  out.v = solve_fixed_point(a, f, c.kappa, 1e-9 * c.premium).value;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

ValueSurface broadcast_h(const ValueSurface& s, int nh) {
  ValueSurface out(s.ny(), s.nx(), s.ng(), nh);
  for (int iy = 0; iy < s.ny(); ++iy)
    for (int ig = 0; ig < s.ng(); ++ig) {
      const auto src = s.line(iy, ig, 0);
      for (int ih = 0; ih < nh; ++ih) std::copy(src.begin(), src.end(), out.line(iy, ig, ih).begin());
    }
  return out;
}

}  // namespace

PricingResult backward_sweep(const ContractParams& c, const MarketParams& market, const RateLattice& lattice,
                             const Grid4D& full_grid, const MortalityTable& mortality, const NumericalParams& numerics,
                             const PricingOptions& options) {
  c.validate();
  market.validate();
  if (!(numerics.delta_w > 0)) throw std::invalid_argument("pricer: delta_w must be > 0");
  if (lattice.size() != full_grid.ny()) throw std::invalid_argument("pricer: grid and lattice disagree on rate states");
  if (full_grid.ng() < 2 || full_grid.nh() < 2 || full_grid.nx() < 2)
    throw std::invalid_argument("pricer: every grid axis needs at least two nodes");
  if (full_grid.gs[full_grid.ng() - 1] != c.premium || full_grid.hs[full_grid.nh() - 1] != c.premium)
    throw std::invalid_argument("pricer: G and H grids must end at the premium");
  mortality.require_ages(c.age0, c.age0 + c.maturity - 1);

  const auto t_start = std::chrono::steady_clock::now();
  const int T = c.maturity;
  const int threads = std::max(1, options.threads);
  const std::set<int> record(options.record_policy.begin(), options.record_policy.end());
  for (int i : record)
    if (i < 1 || i > T - 1) throw std::invalid_argument("pricer: recorded anniversaries must be in 1..T-1");

  const bool collapse = options.collapse_untaxed_h && c.tau == 0 && c.kappa == 0;
  Grid4D grid = full_grid;
  if (collapse) grid.hs = build_uniform_grid(c.premium, 1);
  const int ny = grid.ny(), nx = grid.nx(), ng = grid.ng(), nh = grid.nh();

  PricingResult result;
  ValueSurface next_v(grid), next_u(grid), v_plus(grid), u_plus(grid);
  for (int iy = 0; iy < ny; ++iy)
    for (int ig = 0; ig < ng; ++ig)
      for (int ih = 0; ih < nh; ++ih)
        for (int ix = 0; ix < nx; ++ix) {
          const double x = grid.xs[ix], g = grid.gs[ig], h = grid.hs[ih];
          next_v(iy, ix, ig, ih) = terminal_value_ph(x, g, h, c.g_w, c.tau);
          next_u(iy, ix, ig, ih) = terminal_value_insurer(x, g, c.g_w);
        }

  PlusWorkspace ws;
  double residual = 0;
  for (int i = T - 1; i >= 1; --i) {
    const ExpectationPlan plan = ExpectationPlan::build(market, lattice, i, c.phi);
    residual = std::max(residual, plus_step(plan, grid, next_v, next_u, mortality.q(c.age0 + i), c, threads,
                                            v_plus, u_plus, &ws));
    ValueSurface* policy = nullptr;
    if (record.count(i)) policy = &result.policy.emplace(i, ValueSurface(grid)).first->second;
    minus_step(grid, v_plus, u_plus, withdrawal_terms(c, i), options.mode, numerics.delta_w, threads, next_v,
               next_u, policy);
  }

  // The contract starts at (y = 0, X = G = H = P) with no withdrawal; (P, P)
  // is the last (g, h) lane.
  {
    const ExpectationPlan plan = ExpectationPlan::build(market, lattice, 0, c.phi);
    const NaturalSpline spline(as_span(grid.xs));
    prepare_workspace(grid, spline, next_v, next_u, threads, ws);
    const std::size_t top = static_cast<std::size_t>(ng) * nh - 1;
    const std::size_t c0 = top / kLanes * kLanes;
    std::array<double, kLanes> h_lane{};
    for (int l = 0; l < kLanes; ++l)
      if (c0 + l <= top) h_lane[l] = grid.hs[(c0 + l) % nh];
    std::vector<Destination> dest;
    build_destinations(plan, spline, nx, lattice.origin(), c.premium, dest);
    AlignedVector f;
    Lanes base, eu;
    LaneBlock r;
    try {
      const double* block = ws.packed.data() + (c0 / kLanes) * static_cast<std::size_t>(ny) * nx * kNode;
      accumulate_source(dest, block, h_lane.data(), mortality.q(c.age0), c, f, base, eu);
      r = solve_block(dest, f.data(), base, eu, c, 1e-9 * c.premium);
    } catch (const SolverError& err) {
      throw SolverError(std::string(err.what()) + " at the initial state");
    }
    result.v0 = r.v[top - c0];
    result.u0 = r.u[top - c0];
    residual = std::max(residual, r.residual[top - c0]);
  }

  if (collapse)
    for (auto& entry : result.policy) entry.second = broadcast_h(entry.second, full_grid.nh());
  result.max_fixed_point_residual = residual;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace gmwb
