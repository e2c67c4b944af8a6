#pragma once
// State grid over (Y, X, G, H) and the two interpolation schemes used on it:
// trilinear in (X, G, H) at a fixed rate node, and a natural cubic spline in X.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace gmwb {

class RateLattice;

struct GridSpec {
  double premium = 100;
  int n_x1 = 250;
  int n_x2 = 250;
  int n_g = 100;
  int n_h = 100;
};

/// Account-value nodes: N_X1 uniform steps on [0, 2.5P] then N_X2
/// log-uniform steps on [2.5P, 30P].
Eigen::VectorXd build_x_grid(double premium, int n_x1, int n_x2);

/// Uniform nodes j P / n for j = 0..n.
Eigen::VectorXd build_uniform_grid(double premium, int n);

struct Grid4D {
  Eigen::VectorXd ys, xs, gs, hs;
  double premium = 0;

  static Grid4D build(const GridSpec& spec, const RateLattice& lattice);

  int ny() const { return static_cast<int>(ys.size()); }
  int nx() const { return static_cast<int>(xs.size()); }
  int ng() const { return static_cast<int>(gs.size()); }
  int nh() const { return static_cast<int>(hs.size()); }
  std::size_t points() const {
    return static_cast<std::size_t>(ny()) * nx() * ng() * nh();
  }
};

/// Dense values on a Grid4D; X is the fastest-varying index so that each
/// (y, g, h) line along X is contiguous.
class ValueSurface {
 public:
  ValueSurface() = default;
  ValueSurface(int ny, int nx, int ng, int nh, double fill = 0.0);
  explicit ValueSurface(const Grid4D& grid, double fill = 0.0)
      : ValueSurface(grid.ny(), grid.nx(), grid.ng(), grid.nh(), fill) {}

  int ny() const { return ny_; }
  int nx() const { return nx_; }
  int ng() const { return ng_; }
  int nh() const { return nh_; }
  std::size_t size() const { return data_.size(); }

  std::size_t line_offset(int iy, int ig, int ih) const {
    return ((static_cast<std::size_t>(iy) * ng_ + ig) * nh_ + ih) * nx_;
  }
  std::size_t index(int iy, int ix, int ig, int ih) const { return line_offset(iy, ig, ih) + ix; }

  double& operator()(int iy, int ix, int ig, int ih) { return data_[index(iy, ix, ig, ih)]; }
  double operator()(int iy, int ix, int ig, int ih) const { return data_[index(iy, ix, ig, ih)]; }

  std::span<double> line(int iy, int ig, int ih) { return {data_.data() + line_offset(iy, ig, ih), static_cast<std::size_t>(nx_)}; }
  std::span<const double> line(int iy, int ig, int ih) const { return {data_.data() + line_offset(iy, ig, ih), static_cast<std::size_t>(nx_)}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

 private:
  int ny_ = 0, nx_ = 0, ng_ = 0, nh_ = 0;
  std::vector<double> data_;
};

/// Interval [index, index + 1] holding a query, and the fraction of the way
/// from the lower to the upper node. The fraction exceeds 1 when extrapolating.
struct Cell {
  int index = 0;
  double frac = 0;
};

Cell locate(std::span<const double> nodes, double v);
/// Same for uniform nodes {j * step}, j = 0..n_intervals.
Cell locate_uniform(double v, double step, int n_intervals);

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Trilinear interpolation of the (X, G, H) slice at rate node iy.
/// Linear extrapolation in X above the last node.
double trilinear(const Grid4D& grid, const ValueSurface& surface, int iy, double x, double g, double h);

/// a + t (b - a), returning b exactly at t = 1 and a exactly when a == b.
inline double lerp(double a, double b, double t) { return t == 1 ? b : a + t * (b - a); }

inline double trilinear(const ValueSurface& s, int iy, const Cell& cx, const Cell& cg, const Cell& ch) {
  const std::size_t nx = static_cast<std::size_t>(s.nx());
  const std::size_t nh = static_cast<std::size_t>(s.nh());
  const double* p = s.data() + s.line_offset(iy, cg.index, ch.index) + cx.index;
  const double tx = cx.frac, tg = cg.frac, th = ch.frac;
  // corners ordered (g, h): 00, 01, 10, 11
  const double* p01 = p + nx;
  const double* p10 = p + nh * nx;
  const double* p11 = p10 + nx;
  const double v00 = lerp(p[0], p[1], tx);
  const double v01 = lerp(p01[0], p01[1], tx);
  const double v10 = lerp(p10[0], p10[1], tx);
  const double v11 = lerp(p11[0], p11[1], tx);
  return lerp(lerp(v00, v01, th), lerp(v10, v11, th), tg);
}

/// Natural cubic spline on a fixed set of nodes. The tridiagonal system is
/// factored once; every data line on the same nodes reuses it.
class NaturalSpline {
 public:
  explicit NaturalSpline(std::span<const double> nodes);

  int size() const { return static_cast<int>(nodes_.size()); }
  std::span<const double> nodes() const { return nodes_; }

  /// Second derivatives M of the natural spline through `values`.
  void second_derivatives(std::span<const double> values, std::span<double> out) const;

  /// Same for `width` interleaved lines stored node-major: value j of line c
  /// at values[j * width + c]. Each line gets exactly the arithmetic of the
  /// single-line solve, up to floating-point contraction.
  void second_derivatives_interleaved(const double* values, double* out, std::size_t width) const;

  /// Interpolant at x is  wy0*y[j] + wy1*y[j+1] + wm0*M[j] + wm1*M[j+1].
  /// Above the last node the spline continues linearly with its end slope.
  struct Weights {
    int j = 0;
    double wy0 = 0, wy1 = 0, wm0 = 0, wm1 = 0;
  };
  Weights weights(double x) const;

  static double apply(const Weights& w, const double* y, const double* m) {
    return w.wy0 * y[w.j] + w.wy1 * y[w.j + 1] + w.wm0 * m[w.j] + w.wm1 * m[w.j + 1];
  }

  double operator()(std::span<const double> values, std::span<const double> second, double x) const {
    return apply(weights(x), values.data(), second.data());
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> step_;    // h_j = x_{j+1} - x_j
  std::vector<double> diag_;    // eliminated diagonal (Thomas algorithm)
};

/// Natural-spline second derivatives of every X line of a surface.
ValueSurface spline_second_derivatives(const NaturalSpline& spline, const ValueSurface& surface);

/// One-shot natural cubic spline evaluation.
double spline_1d(std::span<const double> nodes, std::span<const double> values, double x);

}  // namespace gmwb
