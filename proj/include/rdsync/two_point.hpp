#pragma once

// Two-point motion: the chain on pairs of states driven by one shared map
// sequence (V: both paths follow the RDS; W: the second path is perturbed
// by N), its collapse onto a single synchronized super-state, expected
// resynchronization times and the renewal prediction of the long-run
// synchronized fraction.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rdsync/error.hpp"
#include "rdsync/rds_model.hpp"
#include "rdsync/stochastic_core.hpp"

namespace rdsync {

/// Canonical order of product states: unsynchronized pairs (i != j)
/// lexicographically, then the synchronized pairs (i,i) by increasing i.
class ProductIndex {
 public:
  explicit ProductIndex(std::size_t s) : s_(s), index_(s * s), pairs_(s * s) {
    detail::require(s >= 2, "ProductIndex: s must be >= 2");
    std::size_t next = 0;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j)
        if (i != j) assign(i, j, next++);
    for (std::size_t i = 0; i < s; ++i) assign(i, i, next++);
  }

  std::size_t dim() const noexcept { return s_; }
  std::size_t size() const noexcept { return s_ * s_; }
  std::size_t unsync_count() const noexcept { return s_ * (s_ - 1); }

  std::size_t index_of(int x, int y) const {
    return index_[static_cast<std::size_t>(x) * s_ + static_cast<std::size_t>(y)];
  }
  std::pair<int, int> pair_at(std::size_t idx) const { return pairs_[idx]; }
  bool is_synchronized(std::size_t idx) const noexcept { return idx >= unsync_count(); }

  /// External label with 1-based states, e.g. "(1,2)".
  std::string label(std::size_t idx) const {
    const auto [x, y] = pairs_[idx];
    return "(" + std::to_string(x + 1) + "," + std::to_string(y + 1) + ")";
  }

  friend bool operator==(const ProductIndex& a, const ProductIndex& b) noexcept { return a.s_ == b.s_; }

 private:
  void assign(std::size_t i, std::size_t j, std::size_t idx) {
    index_[i * s_ + j] = idx;
    pairs_[idx] = {static_cast<int>(i), static_cast<int>(j)};
  }

  std::size_t s_;
  std::vector<std::size_t> index_;
  std::vector<std::pair<int, int>> pairs_;
};

enum class CouplingKind { rds_rds, rds_rms };

/// Coupled s^2-state kernel in canonical order.
class ProductChainMatrix {
 public:
  ProductChainMatrix(ProductIndex index, StochMatrix kernel, CouplingKind kind)
      : index_(std::move(index)), kernel_(std::move(kernel)), kind_(kind) {
    detail::require(kernel_.dim() == index_.size(), "ProductChainMatrix: kernel dimension must be s^2");
    if (kind_ == CouplingKind::rds_rds) {
      const auto u = static_cast<Eigen::Index>(index_.unsync_count());
      const auto s = static_cast<Eigen::Index>(index_.dim());
      detail::require((kernel_.matrix().bottomLeftCorner(s, u).array() == 0.0).all(),
                      "ProductChainMatrix: RDS/RDS kernel must not leave the synchronized states");
    }
  }

  const ProductIndex& index() const noexcept { return index_; }
  const StochMatrix& kernel() const noexcept { return kernel_; }
  CouplingKind kind() const noexcept { return kind_; }

  /// Unsynchronized-to-unsynchronized block (Mbar).
  Matrix unsync_block() const {
    const auto u = static_cast<Eigen::Index>(index_.unsync_count());
    return kernel_.matrix().topLeftCorner(u, u);
  }

 private:
  ProductIndex index_;
  StochMatrix kernel_;
  CouplingKind kind_;
};

/// V((u,v) -> (u',v')) = sum_i q_i [D_i(u) = u'] [D_i(v) = v'].
inline ProductChainMatrix build_V(const RdsSpec& rds) {
  ProductIndex idx(rds.dim());
  const auto n = static_cast<Eigen::Index>(idx.size());
  Matrix k = Matrix::Zero(n, n);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const auto [u, v] = idx.pair_at(a);
    for (std::size_t m = 0; m < rds.size(); ++m) {
      const auto& d = rds.maps()[m];
      k(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(idx.index_of(d(u), d(v)))) += rds.weights()[m];
    }
  }
  return {std::move(idx), StochMatrix(std::move(k)), CouplingKind::rds_rds};
}

/// W((x,y) -> (x',y')) = sum_i q_i [D_i(x) = x'] N(D_i(y), y').
///
/// Post-condition (checked): the synchronized block equals M * Diag(N).
inline ProductChainMatrix build_W(const RmsSpec& rms) {
  const RdsSpec& rds = rms.rds();
  const Matrix& noise = rms.noise().matrix();
  const int s = static_cast<int>(rds.dim());
  ProductIndex idx(rds.dim());
  const auto n = static_cast<Eigen::Index>(idx.size());
  Matrix k = Matrix::Zero(n, n);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const auto [x, y] = idx.pair_at(a);
    for (std::size_t m = 0; m < rds.size(); ++m) {
      const auto& d = rds.maps()[m];
      const int xn = d(x);
      const int ty = d(y);
      for (int yn = 0; yn < s; ++yn)
        k(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(idx.index_of(xn, yn))) +=
            rds.weights()[m] * noise(ty, yn);
    }
  }

  const Matrix expected = mean_matrix(rds).matrix() * noise.diagonal().asDiagonal();
  if ((k.bottomRightCorner(s, s) - expected).cwiseAbs().maxCoeff() > 1e-12)
    throw std::logic_error("build_W: synchronized block differs from M * Diag(N)");
  return {std::move(idx), StochMatrix(std::move(k)), CouplingKind::rds_rms};
}

/// Kernel on the s(s-1) unsynchronized pairs plus one merged synchronized state S (last index).
struct CollapsedMatrix {
  ProductIndex index;
  StochMatrix kernel;
  CouplingKind kind;

  std::size_t sync_index() const noexcept { return index.unsync_count(); }
  Matrix unsync_block() const {
    const auto u = static_cast<Eigen::Index>(index.unsync_count());
    return kernel.matrix().topLeftCorner(u, u);
  }
  std::string label(std::size_t i) const { return i == sync_index() ? std::string("S") : index.label(i); }
};

struct CollapseResult {
  CollapsedMatrix collapsed;
  /// Law of the unsynchronized pair entered at a desynchronization; absent
  /// when the synchronized state never leaks (eps = 0 or RDS/RDS).
  std::optional<ProbVector> mu1;
  /// Total S -> unsynchronized mass, i.e. 1 - kernel(S,S).
  double desync_mass = 0.0;
};

/// Merges the synchronized states. The S row is the pi-weighted average of
/// the rows (l,l); pi is required for RDS/RMS kernels and ignored for RDS/RDS.
inline CollapseResult collapse(const ProductChainMatrix& p, const std::optional<ProbVector>& pi) {
  const ProductIndex& idx = p.index();
  const auto s = static_cast<Eigen::Index>(idx.dim());
  const auto u = static_cast<Eigen::Index>(idx.unsync_count());
  const Matrix& k = p.kernel().matrix();

  Vector weights;
  if (p.kind() == CouplingKind::rds_rms) {
    detail::require(pi.has_value(), "collapse: RDS/RMS kernel needs the stationary distribution of M");
    detail::require(pi->size() == idx.dim(), "collapse: pi has the wrong dimension");
    weights = pi->vector();
  } else {
    weights = Vector::Constant(s, 1.0 / static_cast<double>(s));
  }

  Matrix c = Matrix::Zero(u + 1, u + 1);
  c.topLeftCorner(u, u) = k.topLeftCorner(u, u);
  c.topRightCorner(u, 1) = k.topRightCorner(u, s).rowwise().sum();
  Vector s_row = Vector::Zero(u);
  for (Eigen::Index l = 0; l < s; ++l) s_row += weights(l) * k.row(u + l).head(u).transpose();
  double desync = s_row.sum();
  if (p.kind() == CouplingKind::rds_rds) {
    s_row.setZero();
    desync = 0.0;
  }
  c.bottomLeftCorner(1, u) = s_row.transpose();
  c(u, u) = 1.0 - desync;

  std::optional<ProbVector> mu1;
  if (desync > 0.0) mu1 = ProbVector(s_row / desync);
  return {CollapsedMatrix{idx, StochMatrix(std::move(c)), p.kind()}, std::move(mu1), desync};
}

/// Collapse of W with pi taken as the stationary law of the RDS mean matrix.
/// Raises NotConverged when that law does not exist.
inline CollapseResult collapse(const ProductChainMatrix& w, const RmsSpec& rms) {
  return collapse(w, std::optional<ProbVector>(stationary_distribution(mean_matrix(rms.rds()))));
}

/// E_mu0[gamma] = mu0 (I - Mbar)^{-1} 1 with Mbar the unsynchronized block.
/// Raises InfiniteExpectedTime when some unsynchronized state never resynchronizes.
inline double expected_resync_time(const ProductChainMatrix& p, const ProbVector& mu0) {
  detail::require(mu0.size() == p.index().unsync_count(),
                  "expected_resync_time: mu0 must live on the unsynchronized states");
  return fundamental_sum_apply(p.unsync_block(), mu0);
}

inline double expected_resync_time(const CollapsedMatrix& c, const ProbVector& mu0) {
  detail::require(mu0.size() == c.index.unsync_count(),
                  "expected_resync_time: mu0 must live on the unsynchronized states");
  return fundamental_sum_apply(c.unsync_block(), mu0);
}

/// P(gamma >= n) = mu0 Mbar^{n-1} 1.
inline double survival_probability(const ProductChainMatrix& p, const ProbVector& mu0, int n) {
  detail::require(n >= 1, "survival_probability: n must be >= 1");
  detail::require(mu0.size() == p.index().unsync_count(),
                  "survival_probability: mu0 must live on the unsynchronized states");
  const Matrix mbar_t = p.unsync_block().transpose();
  Vector v = mu0.vector();
  for (int k = 1; k < n; ++k) v = mbar_t * v;
  return v.sum();
}

struct SyncRatePrediction {
  double rate = 1.0;
  /// Exact per-step desynchronization probability from S: 1 - kernel(S,S).
  double eps_eff = 0.0;
  /// E_mu1[gamma]; absent when nothing desynchronizes, +inf when resynchronization never happens.
  std::optional<double> egamma;
};

/// Renewal prediction of the long-run synchronized fraction: 1 / (1 + eps_eff * E_mu1[gamma]).
inline SyncRatePrediction predicted_sync_rate(const CollapsedMatrix& c, const std::optional<ProbVector>& mu1) {
  const auto si = static_cast<Eigen::Index>(c.sync_index());
  SyncRatePrediction out;
  out.eps_eff = 1.0 - c.kernel(si, si);
  if (!mu1 || out.eps_eff <= 0.0) {
    out.rate = 1.0;
    out.eps_eff = std::max(out.eps_eff, 0.0);
    return out;
  }
  try {
    out.egamma = expected_resync_time(c, *mu1);
    out.rate = 1.0 / (1.0 + out.eps_eff * *out.egamma);
  } catch (const InfiniteExpectedTime&) {
    out.egamma = std::numeric_limits<double>::infinity();
    out.rate = 0.0;
  }
  return out;
}

/// The same prediction with the nominal eps in place of eps_eff.
inline double nominal_sync_rate(double eps, const SyncRatePrediction& p) {
  if (!p.egamma) return 1.0;
  if (std::isinf(*p.egamma)) return eps > 0.0 ? 0.0 : 1.0;
  return 1.0 / (1.0 + eps * *p.egamma);
}

}  // namespace rdsync
