#pragma once

// Exact mutual information (nats) between the RDS path and the RMS path.
//
// The pair (X, Y) is Markov with kernel W, X alone is Markov with M and Y
// alone with M*N, so the log-likelihood ratio of whole paths splits into
// one-step terms and MI^(n+1) = MI^(n) + sum_{k,l} W^n((x0,y0),(k,l)) MI^(1)(k,l).

#include <cmath>
#include <cstdint>
#include <vector>

#include "rdsync/error.hpp"
#include "rdsync/rds_model.hpp"
#include "rdsync/stochastic_core.hpp"
#include "rdsync/two_point.hpp"

namespace rdsync {

struct MiOneStep {
  ProductIndex index;
  Vector values;  // MI^(1)(k,l) by product index

  double at(int x, int y) const { return values(static_cast<Eigen::Index>(index.index_of(x, y))); }
};

/// MI^(1)(k,l) = sum P(x',y') ln[P(x',y') / (M(k,x') MN(l,y'))] over row (k,l) of W; 0 ln 0 = 0.
inline MiOneStep mi_one_step(const ProductChainMatrix& w, const StochMatrix& m, const StochMatrix& mn) {
  const ProductIndex& idx = w.index();
  detail::require(m.dim() == idx.dim() && mn.dim() == idx.dim(), "mi_one_step: dimension mismatch");
  Vector values = Vector::Zero(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const auto [k, l] = idx.pair_at(a);
    double acc = 0.0;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const double p = w.kernel()(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      if (p <= 0.0) continue;
      const auto [xn, yn] = idx.pair_at(b);
      acc += p * std::log(p / (m(k, xn) * mn(l, yn)));
    }
    // Rounding can leave a (near-)independent row a hair below zero.
    if (acc < 0.0 && acc > -1e-14) acc = 0.0;
    values(static_cast<Eigen::Index>(a)) = acc;
  }
  return {idx, std::move(values)};
}

namespace detail {

struct MiKernels {
  ProductChainMatrix w;
  StochMatrix m;
  StochMatrix mn;
};

inline MiKernels mi_kernels(const RmsSpec& rms) {
  StochMatrix m = mean_matrix(rms.rds());
  StochMatrix mn(m.matrix() * rms.noise().matrix());
  return {build_W(rms), std::move(m), std::move(mn)};
}

inline void check_state(const RmsSpec& rms, int x, const char* what) {
  require(x >= 0 && x < static_cast<int>(rms.dim()), std::string(what) + ": state out of range");
}

}  // namespace detail

/// MI^(1..n) starting from the product-state law `start`, propagating the law
/// as a row vector (W^n is never formed).
inline std::vector<double> mi_path_from_law(const RmsSpec& rms, const ProbVector& start, int n) {
  detail::require(n >= 1, "mi_path: n must be >= 1");
  const auto k = detail::mi_kernels(rms);
  detail::require(start.size() == k.w.index().size(), "mi_path: start law must live on the s^2 product states");
  const MiOneStep one = mi_one_step(k.w, k.m, k.mn);
  const Matrix wt = k.w.kernel().matrix().transpose();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  Vector law = start.vector();
  double acc = 0.0;
  for (int t = 0; t < n; ++t) {
    acc += law.dot(one.values);
    out.push_back(acc);
    law = wt * law;
  }
  return out;
}

/// MI^(1..n)(x0, y0).
inline std::vector<double> mi_path(const RmsSpec& rms, int x0, int y0, int n) {
  detail::check_state(rms, x0, "mi_path");
  detail::check_state(rms, y0, "mi_path");
  const ProductIndex idx(rms.dim());
  return mi_path_from_law(rms, ProbVector::point_mass(idx.size(), idx.index_of(x0, y0)), n);
}

inline constexpr double kBruteForceLimit = 1e7;

/// MI between the length-n paths by enumerating every pair of state
/// sequences. Joint law from W, marginals from products of M and M*N rows.
inline double mi_brute_force(const RmsSpec& rms, int x0, int y0, int n) {
  detail::check_state(rms, x0, "mi_brute_force");
  detail::check_state(rms, y0, "mi_brute_force");
  detail::require(n >= 1, "mi_brute_force: n must be >= 1");
  const int s = static_cast<int>(rms.dim());
  detail::require(std::pow(static_cast<double>(s), 2.0 * n) <= kBruteForceLimit,
                  "mi_brute_force: s^(2n) exceeds the enumeration guard of 1e7");
  const auto k = detail::mi_kernels(rms);
  const ProductIndex& idx = k.w.index();
  const Matrix& w = k.w.kernel().matrix();

  double total = 0.0;
  auto walk = [&](auto&& self, int depth, int x, int y, double joint, double px, double py) -> void {
    if (depth == n) {
      total += joint * std::log(joint / (px * py));
      return;
    }
    const auto from = static_cast<Eigen::Index>(idx.index_of(x, y));
    for (int xn = 0; xn < s; ++xn) {
      for (int yn = 0; yn < s; ++yn) {
        const double p = w(from, static_cast<Eigen::Index>(idx.index_of(xn, yn)));
        if (p <= 0.0) continue;
        self(self, depth + 1, xn, yn, joint * p, px * k.m(x, xn), py * k.mn(y, yn));
      }
    }
  };
  walk(walk, 0, x0, y0, 1.0, 1.0, 1.0);
  return total;
}

struct MiSlope {
  double slope = 0.0;
  ProbVector w_inf;
  int period = 1;  // > 1: w_inf is averaged over one period of a periodic coupled chain
};

/// Asymptotic per-step MI increment sum_{k,l} w_inf(k,l) MI^(1)(k,l), where
/// w_inf is the limiting law of W from `start`.
inline MiSlope mi_slope_from(const RmsSpec& rms, const ProbVector& start, double tol = 1e-13) {
  const auto k = detail::mi_kernels(rms);
  const MiOneStep one = mi_one_step(k.w, k.m, k.mn);
  LimitingDistribution lim = limiting_distribution(k.w.kernel(), start, tol);
  const double slope = lim.distribution.vector().dot(one.values);
  return {slope, std::move(lim.distribution), lim.period};
}

/// Slope using the limiting law of W from the uniform product-state law.
inline MiSlope mi_slope(const RmsSpec& rms, double tol = 1e-13) {
  return mi_slope_from(rms, ProbVector::uniform(rms.dim() * rms.dim()), tol);
}

}  // namespace rdsync
