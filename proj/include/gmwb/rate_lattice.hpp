#pragma once
// Trinomial Markov chain approximating the zero-mean OU factor Y on the
// lattice {1.5 j sigma_dt}, matching the first two conditional moments of
// each step exactly.

#include <vector>

#include <Eigen/Core>

#include "gmwb/model.hpp"

namespace gmwb {

/// Standard deviation of Y over one step of length dt.
double sigma_y_step(const MarketParams& p, double dt);

class RateLattice {
 public:
  static RateLattice build(const MarketParams& p, int steps_per_year);

  int steps_per_year() const { return steps_per_year_; }
  double dt() const { return dt_; }
  double sigma_y_dt() const { return sigma_y_dt_; }
  /// Half-width: states are indexed 0..2*half_width().
  int half_width() const { return half_width_; }
  int size() const { return static_cast<int>(states_.size()); }
  /// Index of the state y = 0.
  int origin() const { return half_width_; }

  const Eigen::VectorXd& states() const { return states_; }
  double state(int j) const { return states_[j]; }
  const Eigen::MatrixXd& one_step() const { return one_step_; }
  const Eigen::MatrixXd& annual() const { return annual_; }

  /// Row m of the one-year transition matrix.
  Eigen::VectorXd annual_transition(int m) const;

 private:
  int steps_per_year_ = 0;
  double dt_ = 0;
  double sigma_y_dt_ = 0;
  int half_width_ = 0;
  Eigen::VectorXd states_;
  Eigen::MatrixXd one_step_;
  Eigen::MatrixXd annual_;
};

/// Analytic upper bound on the half-width.
double lattice_half_width_bound(double k, double dt);

/// Dense matrix power by repeated squaring.
Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& a, int n);

}  // namespace gmwb
