#include "gmwb/mc_oracle.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "gmwb/parallel.hpp"

namespace gmwb {

namespace {

constexpr long kBlock = 4096;

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform on (0, 1): 53 random bits, offset by half an ulp.
double open_uniform(std::uint64_t& state) {
  return (static_cast<double>(splitmix64(state) >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

Vector3<double> normal_triplet(std::uint64_t seed, std::uint64_t path, std::uint64_t year) {
  std::uint64_t key = seed;
  key = splitmix64(key) ^ path;
  key = splitmix64(key) ^ year;
  std::uint64_t state = splitmix64(key);
  Vector3<double> z;
  for (int pair = 0; pair < 2; ++pair) {
    const double u1 = open_uniform(state), u2 = open_uniform(state);
    const double r = std::sqrt(-2 * std::log(u1));
    const double a = 2 * std::numbers::pi * u2;
    z[2 * pair] = r * std::cos(a);
    if (pair == 0) z[1] = r * std::sin(a);
  }
  return z;
}

McEstimate mc_insurer_static(const ContractParams& c, const MarketParams& market, const MortalityTable& mortality,
                             long n_paths, std::uint64_t seed, int threads) {
  c.validate();
  market.validate();
  if (n_paths < 2) throw std::invalid_argument("monte carlo: need at least two paths");
  const int T = c.maturity;
  mortality.require_ages(c.age0, c.age0 + T - 1);

  const Matrix3<double> gamma = guarded_cholesky(one_year_covariance(market));
  const double ek = std::exp(-market.k);
  const double b = (1 - ek) / market.k;
  std::vector<double> ib(T), q(T), survival(T + 1);
  survival[0] = 1;
  for (int i = 0; i < T; ++i) {
    ib[i] = integral_beta<double>(i, i + 1, market);
    q[i] = mortality.q(c.age0 + i);
    survival[i + 1] = survival[i] * (1 - q[i]);
  }
  const double log_drift = -c.phi - 0.5 * market.sigma * market.sigma;

  auto path_value = [&](long path) {
    double y = 0, x = c.premium, g = c.premium, disc = 1, value = 0;
    for (int i = 0; i < T; ++i) {
      const Vector3<double> z = normal_triplet(seed, static_cast<std::uint64_t>(path), static_cast<std::uint64_t>(i));
      const Vector3<double> d = gamma * z;
      const double mu3 = y * b + ib[i];
      y = y * ek + d[0];
      x *= std::exp(mu3 + log_drift + d[1]);
      disc *= std::exp(-(mu3 + d[2]));
      const int a = i + 1;
      // death during year i pays the account at t_{i+1}
      value += survival[i] * q[i] * disc * x;
      if (a == T) {
        value += survival[T] * disc * terminal_value_insurer(x, g, c.g_w);
      } else {
        const double w = std::min(c.g_w, g);
        const double pen = c.penalised(a) ? c.s_g * w : 0.0;
        value += survival[a] * disc * (w - pen);
        x = positive_part(x - w);
        g = positive_part(g - w);
      }
    }
    return value;
  };

  const long blocks = (n_paths + kBlock - 1) / kBlock;
  std::vector<double> sum(blocks), sum_sq(blocks);
  parallel_for(static_cast<std::size_t>(blocks), threads, [&](std::size_t lo, std::size_t hi, int) {
    for (std::size_t blk = lo; blk < hi; ++blk) {
      double s = 0, s2 = 0;
      const long end = std::min<long>(n_paths, (static_cast<long>(blk) + 1) * kBlock);
      for (long p = static_cast<long>(blk) * kBlock; p < end; ++p) {
        const double v = path_value(p);
        s += v;
        s2 += v * v;
      }
      sum[blk] = s;
      sum_sq[blk] = s2;
    }
  });
  double s = 0, s2 = 0;
  for (long blk = 0; blk < blocks; ++blk) {
    s += sum[blk];
    s2 += sum_sq[blk];
  }
  McEstimate est;
  est.paths = n_paths;
  est.mean = s / n_paths;
  const double var = std::max(0.0, (s2 - n_paths * est.mean * est.mean) / (n_paths - 1));
  est.std_error = std::sqrt(var / n_paths);
  return est;
}

}  // namespace gmwb
