#include "gmwb/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gmwb/rate_lattice.hpp"

namespace gmwb {

Eigen::VectorXd build_x_grid(double premium, int n_x1, int n_x2) {
  if (n_x1 < 1 || n_x2 < 1) throw std::invalid_argument("x grid: N_X1 and N_X2 must be >= 1");
  const double knee = 2.5 * premium;
  const double log_span = std::log(30.0) - std::log(2.5);
  Eigen::VectorXd xs(n_x1 + n_x2 + 1);
  for (int j = 0; j <= n_x1; ++j) xs[j] = 2.5 * (static_cast<double>(j) / n_x1) * premium;
  for (int j = 1; j <= n_x2; ++j)
    xs[n_x1 + j] = knee * std::exp(log_span * static_cast<double>(j) / n_x2);
  xs[n_x1] = knee;
  xs[n_x1 + n_x2] = 30.0 * premium;
  return xs;
}

Eigen::VectorXd build_uniform_grid(double premium, int n) {
  if (n < 1) throw std::invalid_argument("uniform grid: node count must be >= 1");
  Eigen::VectorXd v(n + 1);
  for (int j = 0; j <= n; ++j) v[j] = (static_cast<double>(j) / n) * premium;
  return v;
}

Grid4D Grid4D::build(const GridSpec& spec, const RateLattice& lattice) {
  if (!(spec.premium > 0)) throw std::invalid_argument("grid: premium must be > 0");
  Grid4D g;
  g.premium = spec.premium;
  g.ys = lattice.states();
  g.xs = build_x_grid(spec.premium, spec.n_x1, spec.n_x2);
  g.gs = build_uniform_grid(spec.premium, spec.n_g);
  g.hs = build_uniform_grid(spec.premium, spec.n_h);
  return g;
}

ValueSurface::ValueSurface(int ny, int nx, int ng, int nh, double fill)
    : ny_(ny), nx_(nx), ng_(ng), nh_(nh),
      data_(static_cast<std::size_t>(ny) * nx * ng * nh, fill) {}

Cell locate(std::span<const double> nodes, double v) {
  const int n = static_cast<int>(nodes.size());
  if (n < 2) return {0, 0.0};
  if (v <= nodes[0]) return {0, (v - nodes[0]) / (nodes[1] - nodes[0])};
  if (v >= nodes[n - 1]) return {n - 2, (v - nodes[n - 2]) / (nodes[n - 1] - nodes[n - 2])};
  // first node strictly greater than v
  const auto it = std::upper_bound(nodes.begin(), nodes.end(), v);
  const int j = static_cast<int>(it - nodes.begin()) - 1;
  return {j, (v - nodes[j]) / (nodes[j + 1] - nodes[j])};
}

Cell locate_uniform(double v, double step, int n_intervals) {
  double s = v / step;
  // nodes are j P / n, so v / step can miss an integer by an ulp or two
  const double r = std::nearbyint(s);
  if (std::abs(s - r) <= 1e-12 * std::max(1.0, r)) s = r;
  if (s <= 0) return {0, 0.0};
  if (s >= n_intervals) return {n_intervals - 1, 1.0};
  int j = static_cast<int>(s);
  if (j >= n_intervals) j = n_intervals - 1;
  return {j, s - j};
}

double trilinear(const Grid4D& grid, const ValueSurface& surface, int iy, double x, double g, double h) {
  const Cell cx = locate(as_span(grid.xs), std::max(x, 0.0));
  const Cell cg = locate_uniform(g, grid.gs[1] - grid.gs[0], grid.ng() - 1);
  const Cell ch = locate_uniform(h, grid.hs[1] - grid.hs[0], grid.nh() - 1);
  return trilinear(surface, iy, cx, cg, ch);
}

NaturalSpline::NaturalSpline(std::span<const double> nodes) : nodes_(nodes.begin(), nodes.end()) {
  const int n = size();
  if (n < 2) throw std::invalid_argument("spline: need at least two nodes");
  step_.resize(n - 1);
  for (int j = 0; j + 1 < n; ++j) {
    step_[j] = nodes_[j + 1] - nodes_[j];
    if (!(step_[j] > 0)) throw std::invalid_argument("spline: nodes must be strictly increasing");
  }
  // Interior unknowns M_1..M_{n-2}; row j: h_{j-1} M_{j-1} + 2(h_{j-1}+h_j) M_j + h_j M_{j+1}.
  diag_.assign(n, 0.0);
  for (int j = 1; j + 1 < n; ++j) {
    double d = 2 * (step_[j - 1] + step_[j]);
    if (j > 1) d -= step_[j - 1] * step_[j - 1] / diag_[j - 1];
    diag_[j] = d;
  }
}

void NaturalSpline::second_derivatives(std::span<const double> y, std::span<double> m) const {
  const int n = size();
  m[0] = 0;
  m[n - 1] = 0;
  if (n == 2) return;
  // forward sweep: m holds the modified right-hand side
  for (int j = 1; j + 1 < n; ++j) {
    double rhs = 6 * ((y[j + 1] - y[j]) / step_[j] - (y[j] - y[j - 1]) / step_[j - 1]);
    if (j > 1) rhs -= step_[j - 1] / diag_[j - 1] * m[j - 1];
    m[j] = rhs;
  }
  // back substitution
  for (int j = n - 2; j >= 1; --j) {
    double v = m[j];
    if (j + 2 < n) v -= step_[j] * m[j + 1];
    m[j] = v / diag_[j];
  }
}

void NaturalSpline::second_derivatives_interleaved(const double* y, double* m, std::size_t w) const {
  const int n = size();
  for (std::size_t c = 0; c < w; ++c) {
    m[c] = 0;
    m[(n - 1) * w + c] = 0;
  }
  if (n == 2) return;
  for (int j = 1; j + 1 < n; ++j) {
    const double* y0 = y + (j - 1) * w;
    const double* y1 = y + j * w;
    const double* y2 = y + (j + 1) * w;
    double* mj = m + j * w;
    const double* mp = m + (j - 1) * w;
    const double f = j > 1 ? step_[j - 1] / diag_[j - 1] : 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      double rhs = 6 * ((y2[c] - y1[c]) / step_[j] - (y1[c] - y0[c]) / step_[j - 1]);
      if (j > 1) rhs -= f * mp[c];
      mj[c] = rhs;
    }
  }
  for (int j = n - 2; j >= 1; --j) {
    double* mj = m + j * w;
    const double* mn = m + (j + 1) * w;
    for (std::size_t c = 0; c < w; ++c) {
      double v = mj[c];
      if (j + 2 < n) v -= step_[j] * mn[c];
      mj[c] = v / diag_[j];
    }
  }
}

NaturalSpline::Weights NaturalSpline::weights(double x) const {
  const int n = size();
  Weights w;
  if (x >= nodes_[n - 1]) {
    // linear continuation with the end slope
    const int j = n - 2;
    const double h = step_[j];
    const double d = x - nodes_[n - 1];
    w.j = j;
    w.wy0 = -d / h;
    w.wy1 = 1 + d / h;
    w.wm0 = d * h / 6;
    w.wm1 = d * h / 3;
    if (d == 0) { w.wy0 = 0; w.wy1 = 1; w.wm0 = 0; w.wm1 = 0; }
    return w;
  }
  const Cell c = locate(nodes_, x < nodes_[0] ? nodes_[0] : x);
  const double h = step_[c.index];
  const double b = c.frac, a = 1 - b;
  w.j = c.index;
  w.wy0 = a;
  w.wy1 = b;
  w.wm0 = (a * a * a - a) * h * h / 6;
  w.wm1 = (b * b * b - b) * h * h / 6;
  return w;
}

ValueSurface spline_second_derivatives(const NaturalSpline& spline, const ValueSurface& s) {
  ValueSurface out(s.ny(), s.nx(), s.ng(), s.nh());
  for (int iy = 0; iy < s.ny(); ++iy)
    for (int ig = 0; ig < s.ng(); ++ig)
      for (int ih = 0; ih < s.nh(); ++ih) spline.second_derivatives(s.line(iy, ig, ih), out.line(iy, ig, ih));
  return out;
}

double spline_1d(std::span<const double> nodes, std::span<const double> values, double x) {
  if (nodes.size() != values.size()) throw std::invalid_argument("spline: size mismatch");
  NaturalSpline sp(nodes);
  std::vector<double> m(nodes.size());
  sp.second_derivatives(values, m);
  return sp(values, m, x);
}

}  // namespace gmwb
