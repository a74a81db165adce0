#pragma once

// Small dense stochastic-matrix arithmetic.
//
// Conventions: distributions are column vectors in storage but act as row
// vectors (pi * M is written M^T * pi). States are 0-based.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rdsync/error.hpp"
#include "rdsync/random.hpp"

namespace rdsync {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kStochasticTol = 1e-9;
inline constexpr double kGeneratorTol = 1e-12;
inline constexpr double kSingularPivot = 1e-12;

namespace detail {

inline std::string cell(Eigen::Index i, Eigen::Index j) {
  std::ostringstream os;
  os << '(' << i << ',' << j << ')';
  return os.str();
}

inline void check_square(const Matrix& m, const char* what) {
  require(m.rows() > 0 && m.rows() == m.cols(), std::string(what) + ": matrix must be square and non-empty");
}

}  // namespace detail

/// Dense row-stochastic matrix. Entries in [0, 1], rows sum to 1 within `tol`.
class StochMatrix {
 public:
  explicit StochMatrix(Matrix m, double tol = kStochasticTol) : m_(std::move(m)) {
    detail::check_square(m_, "StochMatrix");
    for (Eigen::Index i = 0; i < m_.rows(); ++i) {
      for (Eigen::Index j = 0; j < m_.cols(); ++j) {
        const double v = m_(i, j);
        detail::require(std::isfinite(v) && v >= 0.0 && v <= 1.0 + tol,
                        "StochMatrix: entry " + detail::cell(i, j) + " = " + std::to_string(v) +
                            " violates 0 <= entry <= 1");
      }
      const double sum = m_.row(i).sum();
      detail::require(std::abs(sum - 1.0) <= tol,
                      "StochMatrix: row " + std::to_string(i) + " sums to " + std::to_string(sum) +
                          ", violates row sum = 1");
    }
  }

  static StochMatrix identity(std::size_t s) {
    return StochMatrix(Matrix::Identity(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)));
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Rate matrix with diagonal exactly -1, non-negative off-diagonal, zero row sums.
class GeneratorMatrix {
 public:
  explicit GeneratorMatrix(Matrix q) : q_(std::move(q)) {
    detail::check_square(q_, "GeneratorMatrix");
    for (Eigen::Index i = 0; i < q_.rows(); ++i) {
      detail::require(q_(i, i) == -1.0, "GeneratorMatrix: diagonal entry " + detail::cell(i, i) +
                                            " must equal -1 exactly");
      for (Eigen::Index j = 0; j < q_.cols(); ++j) {
        if (i == j) continue;
        detail::require(std::isfinite(q_(i, j)) && q_(i, j) >= 0.0,
                        "GeneratorMatrix: off-diagonal entry " + detail::cell(i, j) + " must be >= 0");
      }
      const double sum = q_.row(i).sum();
      detail::require(std::abs(sum) <= kGeneratorTol,
                      "GeneratorMatrix: row " + std::to_string(i) + " sums to " + std::to_string(sum) +
                          ", violates row sum = 0");
    }
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(q_.rows()); }
  const Matrix& matrix() const noexcept { return q_; }

 private:
  Matrix q_;
};

/// Probability vector: non-negative, sums to 1 within 1e-9.
class ProbVector {
 public:
  explicit ProbVector(Vector p) : p_(std::move(p)) {
    detail::require(p_.size() > 0, "ProbVector: empty");
    for (Eigen::Index i = 0; i < p_.size(); ++i)
      detail::require(std::isfinite(p_(i)) && p_(i) >= 0.0,
                      "ProbVector: entry " + std::to_string(i) + " must be >= 0");
    detail::require(std::abs(p_.sum() - 1.0) <= kStochasticTol,
                    "ProbVector: entries sum to " + std::to_string(p_.sum()) + ", violates sum = 1");
  }

  static ProbVector uniform(std::size_t n) {
    const auto k = static_cast<Eigen::Index>(n);
    return ProbVector(Vector::Constant(k, 1.0 / static_cast<double>(n)));
  }

  static ProbVector point_mass(std::size_t n, std::size_t at) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(n));
    v(static_cast<Eigen::Index>(at)) = 1.0;
    return ProbVector(std::move(v));
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(p_.size()); }
  const Vector& vector() const noexcept { return p_; }
  double operator()(Eigen::Index i) const { return p_(i); }

 private:
  Vector p_;
};

/// N = exp(eps * Q) by scaling and squaring.
///
/// Writes eps*Q = -eps*I + eps*P with P = Q + I >= 0, so the truncated series
/// of exp(eps*P / 2^j) has only non-negative terms; the scaled factor
/// exp(-eps / 2^j) is applied before squaring so intermediate results stay
/// (approximately) stochastic.
inline StochMatrix mat_exp(const GeneratorMatrix& q, double eps) {
  detail::require(std::isfinite(eps) && eps >= 0.0, "mat_exp: eps must be finite and >= 0");
  const Eigen::Index s = static_cast<Eigen::Index>(q.dim());
  const Matrix identity = Matrix::Identity(s, s);
  if (eps == 0.0) return StochMatrix(identity);

  const Matrix shifted = q.matrix() + identity;
  // Row sums of eps*P are exactly eps; scale until the norm is at most 1/2.
  int squarings = 0;
  double scale = eps;
  while (scale > 0.5) {
    scale *= 0.5;
    ++squarings;
  }
  const Matrix b = shifted * scale;

  Matrix sum = identity;
  Matrix term = identity;
  for (int k = 1; k <= 60; ++k) {
    term = term * b / static_cast<double>(k);
    sum += term;
    if (term.maxCoeff() < 1e-18) break;
  }
  Matrix n = std::exp(-scale) * sum;
  for (int i = 0; i < squarings; ++i) n = n * n;

  for (Eigen::Index i = 0; i < s; ++i) {
    const double rs = n.row(i).sum();
    if (std::abs(rs - 1.0) > 1e-12) n.row(i) /= rs;
  }
  return StochMatrix(std::move(n), 1e-10);
}

/// First-order approximation I + eps*Q (diagonal 1 - eps).
inline StochMatrix first_order_N(const GeneratorMatrix& q, double eps) {
  detail::require(std::isfinite(eps) && eps >= 0.0 && eps <= 1.0,
                  "first_order_N: eps must lie in [0, 1] to stay on the simplex");
  const auto s = static_cast<Eigen::Index>(q.dim());
  return StochMatrix(Matrix::Identity(s, s) + eps * q.matrix());
}

// ---------------------------------------------------------------------------
// Communicating-class structure

struct ClassStructure {
  std::vector<int> class_of;             // state -> class id
  std::vector<std::vector<int>> classes;  // members of each class
  std::vector<bool> closed;               // no edge leaves the class
  std::vector<int> period;                // gcd of cycle lengths (closed classes; 0 otherwise)
};

/// Strongly connected components of the support graph (entries > 0), with
/// closedness and period of every closed class.
inline ClassStructure class_structure(const Matrix& p) {
  const int n = static_cast<int>(p.rows());
  ClassStructure cs;
  cs.class_of.assign(static_cast<std::size_t>(n), -1);

  // Tarjan, recursive; n is small (at most a few hundred product states).
  std::vector<int> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
  std::vector<bool> on_stack(static_cast<std::size_t>(n), false);
  std::vector<int> stack;
  int counter = 0;
  auto strongconnect = [&](auto&& self, int v) -> void {
    const auto uv = static_cast<std::size_t>(v);
    index[uv] = low[uv] = counter++;
    stack.push_back(v);
    on_stack[uv] = true;
    for (int w = 0; w < n; ++w) {
      if (p(v, w) <= 0.0) continue;
      const auto uw = static_cast<std::size_t>(w);
      if (index[uw] < 0) {
        self(self, w);
        low[uv] = std::min(low[uv], low[uw]);
      } else if (on_stack[uw]) {
        low[uv] = std::min(low[uv], index[uw]);
      }
    }
    if (low[uv] == index[uv]) {
      std::vector<int> members;
      int w = -1;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[static_cast<std::size_t>(w)] = false;
        cs.class_of[static_cast<std::size_t>(w)] = static_cast<int>(cs.classes.size());
        members.push_back(w);
      } while (w != v);
      std::sort(members.begin(), members.end());
      cs.classes.push_back(std::move(members));
    }
  };
  for (int v = 0; v < n; ++v)
    if (index[static_cast<std::size_t>(v)] < 0) strongconnect(strongconnect, v);

  for (std::size_t c = 0; c < cs.classes.size(); ++c) {
    const auto& members = cs.classes[c];
    bool closed = true;
    for (int v : members)
      for (int w = 0; w < n; ++w)
        if (p(v, w) > 0.0 && cs.class_of[static_cast<std::size_t>(w)] != static_cast<int>(c)) closed = false;
    cs.closed.push_back(closed);

    int period = 0;
    if (closed) {
      // BFS levels from the first member; period = gcd of (level[u] + 1 - level[w]).
      std::vector<int> level(static_cast<std::size_t>(n), -1);
      std::vector<int> queue{members.front()};
      level[static_cast<std::size_t>(members.front())] = 0;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const int u = queue[head];
        for (int w = 0; w < n; ++w) {
          if (p(u, w) <= 0.0) continue;
          auto& lw = level[static_cast<std::size_t>(w)];
          if (lw < 0) {
            lw = level[static_cast<std::size_t>(u)] + 1;
            queue.push_back(w);
          } else {
            period = std::gcd(period, std::abs(level[static_cast<std::size_t>(u)] + 1 - lw));
          }
        }
      }
    }
    cs.period.push_back(period);
  }
  return cs;
}

/// Least common multiple of the periods of all closed classes.
inline int chain_period(const Matrix& p) {
  const ClassStructure cs = class_structure(p);
  int l = 1;
  for (std::size_t c = 0; c < cs.classes.size(); ++c)
    if (cs.closed[c]) l = std::lcm(l, std::max(cs.period[c], 1));
  return l;
}

// ---------------------------------------------------------------------------
// Stationary and limiting distributions

namespace detail {

/// Iterates v <- v * step until ||v_{k+1} - v_k||_1 <= tol. Returns false on budget exhaustion.
inline bool power_iterate(const Matrix& step, Vector& v, double tol, long max_iter) {
  const Matrix step_t = step.transpose();
  for (long it = 0; it < max_iter; ++it) {
    Vector next = step_t * v;
    next /= next.sum();
    const double delta = (next - v).lpNorm<1>();
    v = std::move(next);
    if (delta <= tol) return true;
  }
  return false;
}

}  // namespace detail

/// Stationary distribution of an aperiodic chain by power iteration from uniform.
/// Periodic closed classes, or no convergence within max_iter, raise NotConverged.
inline ProbVector stationary_distribution(const StochMatrix& m, double tol = 1e-12, long max_iter = 1'000'000) {
  const int period = chain_period(m.matrix());
  if (period > 1)
    throw NotConverged("stationary_distribution: chain has a closed class of period " + std::to_string(period) +
                       "; power iteration does not converge");
  Vector v = Vector::Constant(m.matrix().rows(), 1.0 / static_cast<double>(m.dim()));
  if (!detail::power_iterate(m.matrix(), v, tol, max_iter))
    throw NotConverged("stationary_distribution: no convergence to tol " + std::to_string(tol) + " within " +
                       std::to_string(max_iter) + " iterations");
  v = v.cwiseMax(0.0);
  v /= v.sum();
  return ProbVector(std::move(v));
}

struct LimitingDistribution {
  ProbVector distribution;
  int period = 1;  // > 1 means the result is a Cesaro average over one period
};

/// Limit of start * P^n, averaged over one period when the chain is periodic.
inline LimitingDistribution limiting_distribution(const StochMatrix& p, const ProbVector& start, double tol = 1e-12,
                                                  long max_iter = 1'000'000) {
  detail::require(start.size() == p.dim(), "limiting_distribution: dimension mismatch");
  const int period = chain_period(p.matrix());
  Matrix step = Matrix::Identity(p.matrix().rows(), p.matrix().cols());
  for (int k = 0; k < period; ++k) step = step * p.matrix();

  Vector v = start.vector();
  if (!detail::power_iterate(step, v, tol, max_iter))
    throw NotConverged("limiting_distribution: no convergence within " + std::to_string(max_iter) + " iterations");

  Vector avg = v;
  Vector cur = v;
  for (int k = 1; k < period; ++k) {
    cur = p.matrix().transpose() * cur;
    avg += cur;
  }
  avg /= static_cast<double>(period);
  avg = avg.cwiseMax(0.0);
  avg /= avg.sum();
  return {ProbVector(std::move(avg)), period};
}

// ---------------------------------------------------------------------------

/// mu0 * (I - Mbar)^{-1} * 1 via a dense LU solve of (I - Mbar) x = 1.
/// A pivot below 1e-12 means some state never absorbs: InfiniteExpectedTime.
inline double fundamental_sum_apply(const Matrix& mbar, const ProbVector& mu0) {
  detail::check_square(mbar, "fundamental_sum_apply");
  detail::require(static_cast<std::size_t>(mbar.rows()) == mu0.size(), "fundamental_sum_apply: dimension mismatch");
  for (Eigen::Index i = 0; i < mbar.rows(); ++i) {
    detail::require((mbar.row(i).array() >= 0.0).all(), "fundamental_sum_apply: Mbar has a negative entry");
    detail::require(mbar.row(i).sum() <= 1.0 + kStochasticTol, "fundamental_sum_apply: Mbar row sum exceeds 1");
  }
  const Eigen::Index n = mbar.rows();
  const Matrix a = Matrix::Identity(n, n) - mbar;
  const Eigen::PartialPivLU<Matrix> lu(a);
  if (lu.matrixLU().diagonal().cwiseAbs().minCoeff() < kSingularPivot) throw InfiniteExpectedTime();
  const Vector x = lu.solve(Vector::Ones(n));
  return mu0.vector().dot(x);
}

/// Random Q: off-diagonals uniform on [0, 1] in row-major order, each row
/// normalized so its off-diagonal part sums to 1, diagonal -1.
inline GeneratorMatrix random_generator_matrix(std::size_t s, std::uint64_t seed) {
  detail::require(s >= 2, "random_generator_matrix: s must be >= 2");
  const auto n = static_cast<Eigen::Index>(s);
  Xoshiro256 rng(seed);
  Matrix q = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      q(i, j) = rng.uniform();
      total += q(i, j);
    }
    if (total <= 0.0) {
      // All draws were exactly zero; spread mass evenly.
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != i) q(i, j) = 1.0;
      total = static_cast<double>(n - 1);
    }
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) q(i, j) /= total;
    q(i, i) = -1.0;
  }
  return GeneratorMatrix(std::move(q));
}

}  // namespace rdsync
