#pragma once

// Brute-force reference computations used by the test suites and by the
// `oracle` self-test command. None of the analytic code paths call these;
// each one reaches its answer by a different route (direct series,
// enumeration over map sequences, direct linear solve).

#include <cmath>
#include <functional>
#include <vector>

#include "rdsync/error.hpp"
#include "rdsync/rds_model.hpp"
#include "rdsync/stochastic_core.hpp"

namespace rdsync::oracle {

/// sum_{k=0}^{terms-1} (eps Q)^k / k!, no scaling.
inline Matrix taylor_exp(const Matrix& q, double eps, int terms = 30) {
  const Matrix a = eps * q;
  Matrix sum = Matrix::Identity(q.rows(), q.cols());
  Matrix term = sum;
  for (int k = 1; k < terms; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

/// sum_{n=1}^{terms} mu0 Mbar^{n-1} 1.
inline double neumann_partial_sum(const Matrix& mbar, const Vector& mu0, int terms) {
  Vector v = mu0;
  double total = 0.0;
  for (int n = 1; n <= terms; ++n) {
    total += v.sum();
    v = mbar.transpose() * v;
  }
  return total;
}

/// Solves pi (M - I) = 0 with sum(pi) = 1 directly (least squares on the stacked system).
inline Vector stationary_by_solve(const Matrix& m) {
  const Eigen::Index s = m.rows();
  Matrix a(s + 1, s);
  a.topRows(s) = (m - Matrix::Identity(s, s)).transpose();
  a.row(s).setOnes();
  Vector b = Vector::Zero(s + 1);
  b(s) = 1.0;
  return a.colPivHouseholderQr().solve(b);
}

/// P(x_t != y_t for t = 0..n-1) for two RDS paths from (x, y), by summing
/// the weight of every map sequence of length n-1.
inline double survival_by_map_enumeration(const RdsSpec& rds, int x, int y, int n) {
  detail::require(n >= 1, "survival_by_map_enumeration: n >= 1");
  std::function<double(int, int, int)> rec = [&](int steps_left, int a, int b) -> double {
    if (a == b) return 0.0;
    if (steps_left == 0) return 1.0;
    double acc = 0.0;
    for (std::size_t m = 0; m < rds.size(); ++m) {
      const auto& d = rds.maps()[m];
      acc += rds.weights()[m] * rec(steps_left - 1, d(a), d(b));
    }
    return acc;
  };
  return rec(n - 1, x, y);
}

/// Same event for the RDS/RMS pair, summing over maps and over the noisy
/// target of the second path at every step (no product kernel involved).
inline double survival_by_pair_enumeration(const RdsSpec& rds, const Matrix& noise, int x, int y, int n) {
  detail::require(n >= 1, "survival_by_pair_enumeration: n >= 1");
  const int s = static_cast<int>(rds.dim());
  std::function<double(int, int, int)> rec = [&](int steps_left, int a, int b) -> double {
    if (a == b) return 0.0;
    if (steps_left == 0) return 1.0;
    double acc = 0.0;
    for (std::size_t m = 0; m < rds.size(); ++m) {
      const auto& d = rds.maps()[m];
      for (int bn = 0; bn < s; ++bn) {
        const double p = rds.weights()[m] * noise(d(b), bn);
        if (p > 0.0) acc += p * rec(steps_left - 1, d(a), bn);
      }
    }
    return acc;
  };
  return rec(n - 1, x, y);
}

/// Shannon entropy (nats) of the length-n path (x_1..x_n) of the chain M from x0.
inline double path_entropy(const Matrix& m, int x0, int n) {
  const int s = static_cast<int>(m.rows());
  double h = 0.0;
  std::function<void(int, int, double)> rec = [&](int depth, int x, double p) {
    if (depth == n) {
      h -= p * std::log(p);
      return;
    }
    for (int xn = 0; xn < s; ++xn)
      if (m(x, xn) > 0.0) rec(depth + 1, xn, p * m(x, xn));
  };
  rec(0, x0, 1.0);
  return h;
}

}  // namespace rdsync::oracle
