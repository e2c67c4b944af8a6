#include "doctest.h"
#include "support.hpp"

#include <random>

#include "gmwb/model.hpp"

using namespace gmwb;

TEST_SUITE("model") {

TEST_CASE("beta at zero is r0 and approaches its asymptote") {
  MarketParams p;
  p.r0 = 0.03;
  p.omega = 0.05;
  p.k = 1;
  CHECK(beta(0.0, p) == p.r0);
  CHECK(beta(200.0, p) == doctest::Approx(p.r0 + p.omega * p.omega / (2 * p.k * p.k)).epsilon(1e-14));
  CHECK(beta(1.0, p) == doctest::Approx(0.03 + 0.00125 * std::pow(1 - std::exp(-1.0), 2)).epsilon(1e-14));
  CHECK(beta(1.0, p) == doctest::Approx(0.0304995).epsilon(1e-6));
}

TEST_CASE("beta is nondecreasing in t") {
  testing::Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    MarketParams p = gen.market();
    double prev = beta(0.0, p);
    for (double t = 0.05; t < 20; t += 0.05) {
      const double b = beta(t, p);
      REQUIRE(b >= prev);
      prev = b;
    }
  }
}

TEST_CASE("integral of beta matches quadrature") {
  MarketParams p;
  p.r0 = 0.03;
  p.omega = 0.05;
  p.k = 1;
  const double quad = testing::simpson([&](double t) { return beta(t, p); }, 0, 1, 1e-14);
  CHECK(std::abs(integral_beta(0.0, 1.0, p) - quad) <= 1e-10);

  testing::Gen gen(12);
  for (int trial = 0; trial < 50; ++trial) {
    MarketParams q = gen.market();
    const double a = gen.uniform(0, 10), b = a + gen.uniform(0, 3);
    const double ref = testing::simpson([&](double t) { return beta(t, q); }, a, b, 1e-15);
    CHECK(std::abs(integral_beta(a, b, q) - ref) <= 1e-10);
  }
}

TEST_CASE("integral of beta: degenerate cases and additivity") {
  MarketParams p;
  p.omega = 0;
  CHECK(integral_beta(2.0, 5.0, p) == doctest::Approx(3 * p.r0).epsilon(1e-15));
  CHECK(integral_beta(3.0, 3.0, MarketParams{}) == 0.0);

  testing::Gen gen(13);
  for (int trial = 0; trial < 500; ++trial) {
    MarketParams q = gen.market();
    const double a = gen.uniform(0, 14), b = a + gen.uniform(0, 5), c = b + gen.uniform(0, 5);
    const double whole = integral_beta(a, c, q);
    CHECK(std::abs(integral_beta(a, b, q) + integral_beta(b, c, q) - whole) <= 1e-12 * std::abs(whole));
  }
}

TEST_CASE("conditional moments: means and the printed covariance entries") {
  MarketParams p;
  p.k = 1;
  p.omega = 0.05;
  const auto m0 = conditional_moments(0.0, 100.0, 0.01, p, 3.0);
  CHECK(m0.mu[0] == 0.0);
  CHECK(m0.Pi(0, 0) == doctest::Approx(0.5 * 0.0025 * (1 - std::exp(-2.0))).epsilon(1e-14));
  CHECK(m0.Pi(0, 0) == doctest::Approx(0.0010808).epsilon(1e-4));
  CHECK(m0.mu[2] == doctest::Approx(integral_beta(3.0, 4.0, p)).epsilon(1e-14));
  CHECK(m0.mu[1] == doctest::Approx(std::log(100.0) + m0.mu[2] - 0.01 - 0.5 * p.sigma * p.sigma).epsilon(1e-14));

  const auto m1 = conditional_moments(0.02, 50.0, 0.0, p, 0.0);
  CHECK(m1.mu[0] == doctest::Approx(0.02 * std::exp(-1.0)).epsilon(1e-14));

  // Pi22 = Pi33 + sigma^2 + 2 sigma rho (omega / k)(1 - (1 - e^-k) / k)
  testing::Gen gen(14);
  for (int trial = 0; trial < 100; ++trial) {
    MarketParams q = gen.market();
    const auto m = conditional_moments(0.0, 1.0, 0.0, q, 0.0);
    const double expect = m.Pi(2, 2) + q.sigma * q.sigma +
                          2 * q.sigma * q.rho * (q.omega / q.k) * (1 - (1 - std::exp(-q.k)) / q.k);
    CHECK(m.Pi(1, 1) == doctest::Approx(expect).epsilon(1e-13));
  }
  CHECK_THROWS_AS(conditional_moments(0.0, 0.0, 0.0, p, 0.0), std::invalid_argument);
}

TEST_CASE("Cholesky factor reconstructs the covariance") {
  testing::Gen gen(15);
  for (int trial = 0; trial < 1000; ++trial) {
    MarketParams q = gen.market();
    if (trial % 10 == 0) q.rho = trial % 20 == 0 ? 1.0 : -1.0;
    if (trial % 7 == 0) q.omega = 0;
    const Matrix3<double> pi = one_year_covariance(q);
    const Matrix3<double> l = guarded_cholesky(pi);
    for (int i = 0; i < 3; ++i) {
      CHECK(l(i, i) >= 0);
      for (int j = i + 1; j < 3; ++j) CHECK(l(i, j) == 0);
    }
    const double norm = pi.cwiseAbs().rowwise().sum().maxCoeff();
    CHECK((l * l.transpose() - pi).cwiseAbs().rowwise().sum().maxCoeff() <= 1e-12 * norm);
  }
}

TEST_CASE("covariance matches simulated paths of the continuous model") {
  // Fine-step simulation: exact OU steps for Y, trapezoidal integral of the
  // rate, Gaussian log-returns correlated with the OU shocks.
  MarketParams p;
  p.sigma = 0.2;
  p.k = 0.8;
  p.omega = 0.07;
  p.rho = 0.4;
  const Matrix3<double> pi = one_year_covariance(p);

  const long n = 1000000;
  const int steps = 64;
  const double dt = 1.0 / steps;
  const double decay = std::exp(-p.k * dt);
  const double sd_y = p.omega * std::sqrt((1 - decay * decay) / (2 * p.k));
  const double sd_s = p.sigma * std::sqrt(dt);
  const double rho_c = std::sqrt(1 - p.rho * p.rho);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z;

  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Matrix3d sq = Eigen::Matrix3d::Zero();
  std::vector<Eigen::Vector3d> samples(n);
  for (long i = 0; i < n; ++i) {
    double y = 0, lx = 0, iy = 0;
    for (int s = 0; s < steps; ++s) {
      const double zr = z(rng), zs = p.rho * zr + rho_c * z(rng);
      const double y1 = y * decay + sd_y * zr;
      iy += 0.5 * (y + y1) * dt;
      lx += sd_s * zs;
      y = y1;
    }
    // ln X = ln x + int r - phi - sigma^2/2 + sigma W: only int Y and W are random
    samples[i] = Eigen::Vector3d(y, lx + iy, iy);
    sum += samples[i];
  }
  const Eigen::Vector3d mean = sum / n;
  for (const auto& s : samples) sq += (s - mean) * (s - mean).transpose();
  const Eigen::Matrix3d cov = sq / (n - 1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) {
      double m2 = 0;
      for (const auto& s : samples) {
        const double d = (s[i] - mean[i]) * (s[j] - mean[j]) - cov(i, j);
        m2 += d * d;
      }
      const double se = std::sqrt(m2 / n / n);
      INFO("entry (" << i << "," << j << ") model " << pi(i, j) << " simulated " << cov(i, j) << " se " << se);
      CHECK(std::abs(cov(i, j) - pi(i, j)) <= 3 * se);
    }
}

}
