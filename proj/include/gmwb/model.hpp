#pragma once
// Black-Scholes Hull-White model with a flat initial curve.
//
//   dS = r S dt + sigma S dZ^S
//   r  = Y + beta(t),   dY = -k Y dt + omega dZ^r,   Y_0 = 0
//   d<Z^S, Z^r> = rho dt
//
// All one-year conditional quantities below are exact (the joint law of
// (Y_{t+1}, ln X_{t+1}, int_t^{t+1} r ds) is Gaussian).

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace gmwb {

template <typename Scalar>
struct BasicMarketParams {
  Scalar s0 = 100;
  Scalar sigma = 0.16;
  Scalar r0 = 0.03;
  Scalar k = 1;
  Scalar omega = 0.05;
  Scalar rho = 0.2;

  void validate() const {
    if (!(sigma > 0)) throw std::invalid_argument("market: sigma must be > 0");
    if (!(k > 0)) throw std::invalid_argument("market: k must be > 0");
    if (!(omega >= 0)) throw std::invalid_argument("market: omega must be >= 0");
    if (!(std::abs(rho) <= 1)) throw std::invalid_argument("market: |rho| must be <= 1");
  }
};
using MarketParams = BasicMarketParams<double>;

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// Mean, covariance and lower Cholesky factor of
/// (Y_{t+1}, ln X_{t+1}, int r ds) given (Y_t, X_t).
template <typename Scalar>
struct BasicGaussianMoments {
  Vector3<Scalar> mu;
  Matrix3<Scalar> Pi;
  Matrix3<Scalar> Gamma;
};
using GaussianMoments = BasicGaussianMoments<double>;

/// Deterministic shift of the short rate for the flat curve P(0,t) = exp(-r0 t).
template <typename Scalar>
Scalar beta(Scalar t, const BasicMarketParams<Scalar>& p) {
  using std::exp;
  const Scalar a = 1 - exp(-p.k * t);
  return p.r0 + p.omega * p.omega / (2 * p.k * p.k) * a * a;
}

/// Closed-form integral of beta over [ta, tb].
template <typename Scalar>
Scalar integral_beta(Scalar ta, Scalar tb, const BasicMarketParams<Scalar>& p) {
  using std::exp;
  if (ta == tb) return Scalar(0);
  const Scalar k = p.k;
  // Antiderivative of (1 - e^{-kt})^2, written as a difference to avoid
  // cancellation between the two endpoint values.
  const Scalar lin = tb - ta;
  const Scalar e1 = exp(-k * tb) - exp(-k * ta);
  const Scalar e2 = exp(-2 * k * tb) - exp(-2 * k * ta);
  const Scalar squared = lin + (2 / k) * e1 - e2 / (2 * k);
  return p.r0 * lin + p.omega * p.omega / (2 * k * k) * squared;
}

/// Lower Cholesky factor of a 3x3 symmetric PSD matrix. Pivots below
/// 1e-14 * trace are treated as exact zeros (rank-deficient covariance when
/// omega = 0 or |rho| = 1); the corresponding column is left zero.
template <typename Scalar>
Matrix3<Scalar> guarded_cholesky(const Matrix3<Scalar>& a) {
  using std::sqrt;
  const Scalar floor = Scalar(1e-14) * a.trace();
  Matrix3<Scalar> l = Matrix3<Scalar>::Zero();
  for (int j = 0; j < 3; ++j) {
    Scalar d = a(j, j);
    for (int c = 0; c < j; ++c) d -= l(j, c) * l(j, c);
    if (d < -Scalar(1e-10) * (a.trace() + Scalar(1e-300)))
      throw std::runtime_error("cholesky: covariance is not positive semidefinite");
    if (d <= floor) continue;
    l(j, j) = sqrt(d);
    for (int i = j + 1; i < 3; ++i) {
      Scalar s = a(i, j);
      for (int c = 0; c < j; ++c) s -= l(i, c) * l(j, c);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

/// Covariance of one year of (Y, ln X, int r) -- independent of the state.
template <typename Scalar>
Matrix3<Scalar> one_year_covariance(const BasicMarketParams<Scalar>& p) {
  using std::exp;
  const Scalar k = p.k, w = p.omega, s = p.sigma, rho = p.rho;
  const Scalar ek = exp(-k), e2k = exp(-2 * k);
  const Scalar b = (1 - ek) / k;

  const Scalar pi11 = Scalar(0.5) * w * w * (1 - e2k) / k;
  const Scalar pi33 = (w / k) * (w / k) * (1 + 2 * ek / k - e2k / (2 * k) - 3 / (2 * k));
  const Scalar cross = s * rho * (w / k) * (1 - b);
  const Scalar pi22 = pi33 + s * s + 2 * cross;
  const Scalar pi13 = Scalar(0.5) * w * w * b * b;
  const Scalar pi12 = pi13 + s * rho * w * b;
  const Scalar pi23 = pi33 + cross;

  Matrix3<Scalar> pi;
  pi << pi11, pi12, pi13,
        pi12, pi22, pi23,
        pi13, pi23, pi33;
  return pi;
}

/// Moments of the one-year transition starting at anniversary t_i from
/// (Y = y, X = x), with continuous fee rate phi.
template <typename Scalar>
BasicGaussianMoments<Scalar> conditional_moments(Scalar y, Scalar x, Scalar phi,
                                                 const BasicMarketParams<Scalar>& p,
                                                 Scalar t_i) {
  using std::exp;
  using std::log;
  if (!(x > 0)) throw std::invalid_argument("conditional_moments: x must be > 0");
  BasicGaussianMoments<Scalar> m;
  const Scalar ek = exp(-p.k);
  const Scalar mu3 = y * (1 - ek) / p.k + integral_beta(t_i, t_i + 1, p);
  m.mu << y * ek, log(x) + mu3 - phi - Scalar(0.5) * p.sigma * p.sigma, mu3;
  m.Pi = one_year_covariance(p);
  m.Gamma = guarded_cholesky(m.Pi);
  return m;
}

}  // namespace gmwb
