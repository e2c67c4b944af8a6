#include "gmwb/rate_lattice.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>

namespace gmwb {

namespace {

struct Branches {
  std::array<int, 3> to{};
  std::array<double, 3> prob{};
};

// Successors of lattice node j (value 1.5 j sigma_dt). Everything is done in
// units of sigma_dt, so the node spacing is 1.5.
Branches branch(int j, double decay) {
  const double z = j * decay;  // conditional mean in units of the spacing
  const int ja = static_cast<int>(std::ceil(z));
  const double a = 1.5 * (ja - z);   // Delta^A / sigma_dt, in [0, 1.5)
  const double b = 1.5 - a;          // Delta^B / sigma_dt, in (0, 1.5]

  const double lo = (3.0 - std::sqrt(5.0)) / 2.0;
  const double hi = std::sqrt(5.0) / 2.0;
  bool upper;  // true: {A, B, C}; false: {A, B, D}
  if (a < lo) {
    upper = true;
  } else if (a > hi) {
    upper = false;
  } else {
    upper = std::abs(ja + 1) <= std::abs(ja - 2);
  }

  Branches br;
  if (upper) {
    br.to = {ja, ja - 1, ja + 1};
    br.prob = {(5 - 4 * a * a) / 9, (2 * a * a + 3 * a + 2) / 9, (2 * a * a - 3 * a + 2) / 9};
  } else {
    br.to = {ja, ja - 1, ja - 2};
    br.prob = {(2 * b * b + 3 * b + 2) / 9, (5 - 4 * b * b) / 9, (2 * b * b - 3 * b + 2) / 9};
  }
  for (double pr : br.prob) {
    if (pr < -1e-12 || pr > 1 + 1e-12)
      throw std::logic_error("rate lattice: inadmissible transition probability at node " +
                             std::to_string(j));
  }
  return br;
}

}  // namespace

double sigma_y_step(const MarketParams& p, double dt) {
  return p.omega * std::sqrt((1 - std::exp(-2 * p.k * dt)) / (2 * p.k));
}

double lattice_half_width_bound(double k, double dt) {
  const double e = std::exp(k * dt);
  return (3 - std::sqrt(5.0)) * e / (3 * (e - 1)) + 1;
}

Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& a, int n) {
  if (n < 0) throw std::invalid_argument("matrix_power: negative exponent");
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd base = a;
  while (n > 0) {
    if (n & 1) result = result * base;
    n >>= 1;
    if (n > 0) base = base * base;
  }
  return result;
}

RateLattice RateLattice::build(const MarketParams& p, int steps_per_year) {
  if (steps_per_year < 1) throw std::invalid_argument("rate lattice: N_T must be >= 1");
  if (!(p.k > 0)) throw std::invalid_argument("rate lattice: k must be > 0");

  RateLattice lat;
  lat.steps_per_year_ = steps_per_year;
  lat.dt_ = 1.0 / steps_per_year;
  lat.sigma_y_dt_ = sigma_y_step(p, lat.dt_);

  if (lat.sigma_y_dt_ == 0) {
    // Deterministic rates: Y stays at 0.
    lat.half_width_ = 0;
    lat.states_ = Eigen::VectorXd::Zero(1);
    lat.one_step_ = Eigen::MatrixXd::Ones(1, 1);
    lat.annual_ = Eigen::MatrixXd::Ones(1, 1);
    return lat;
  }

  const double decay = std::exp(-p.k * lat.dt_);

  // Breadth-first search of the connected component of node 0.
  std::map<int, Branches> reach;
  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    if (reach.count(j)) continue;
    const Branches br = branch(j, decay);
    reach.emplace(j, br);
    for (int t : br.to)
      if (!reach.count(t)) queue.push_back(t);
  }

  int lo = reach.begin()->first, hi = reach.rbegin()->first;
  if (lo != -hi || static_cast<int>(reach.size()) != hi - lo + 1)
    throw std::logic_error("rate lattice: reachable set is not a symmetric contiguous range");

  lat.half_width_ = hi;
  const int n = 2 * hi + 1;
  lat.states_.resize(n);
  for (int i = 0; i < n; ++i) lat.states_[i] = 1.5 * (i - hi) * lat.sigma_y_dt_;

  lat.one_step_ = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [j, br] : reach) {
    for (int b = 0; b < 3; ++b) lat.one_step_(j + hi, br.to[b] + hi) += br.prob[b];
  }
  lat.annual_ = matrix_power(lat.one_step_, steps_per_year);
  return lat;
}

Eigen::VectorXd RateLattice::annual_transition(int m) const {
  if (m < 0 || m >= size()) throw std::out_of_range("rate lattice: state index out of range");
  return annual_.row(m).transpose();
}

}  // namespace gmwb
