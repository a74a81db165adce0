#pragma once

// Random dynamical systems as weighted families of deterministic maps, and
// their intrinsically perturbed extension.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rdsync/error.hpp"
#include "rdsync/stochastic_core.hpp"

namespace rdsync {

/// Deterministic transition rule on {0..s-1}, stored as the target of each state.
class DeterministicMap {
 public:
  explicit DeterministicMap(std::vector<int> target) : target_(std::move(target)) {
    const auto s = static_cast<int>(target_.size());
    detail::require(s >= 2, "DeterministicMap: state space must have at least 2 states");
    for (int i = 0; i < s; ++i)
      detail::require(target_[static_cast<std::size_t>(i)] >= 0 && target_[static_cast<std::size_t>(i)] < s,
                      "DeterministicMap: target of state " + std::to_string(i) + " is not a valid state");
  }

  static DeterministicMap identity(std::size_t s) {
    std::vector<int> t(s);
    for (std::size_t i = 0; i < s; ++i) t[i] = static_cast<int>(i);
    return DeterministicMap(std::move(t));
  }

  static DeterministicMap constant(std::size_t s, int value) { return DeterministicMap(std::vector<int>(s, value)); }

  std::size_t dim() const noexcept { return target_.size(); }
  int operator()(int state) const { return target_[static_cast<std::size_t>(state)]; }
  const std::vector<int>& targets() const noexcept { return target_; }

  bool is_constant() const noexcept {
    return std::all_of(target_.begin(), target_.end(), [&](int t) { return t == target_.front(); });
  }

  bool is_permutation() const {
    std::vector<bool> seen(target_.size(), false);
    for (int t : target_) {
      if (seen[static_cast<std::size_t>(t)]) return false;
      seen[static_cast<std::size_t>(t)] = true;
    }
    return true;
  }

  /// 0/1 matrix with a single 1 per row.
  Matrix matrix() const {
    const auto s = static_cast<Eigen::Index>(dim());
    Matrix m = Matrix::Zero(s, s);
    for (Eigen::Index i = 0; i < s; ++i) m(i, target_[static_cast<std::size_t>(i)]) = 1.0;
    return m;
  }

  friend bool operator==(const DeterministicMap&, const DeterministicMap&) = default;
  friend auto operator<=>(const DeterministicMap&, const DeterministicMap&) = default;

 private:
  std::vector<int> target_;
};

/// Weighted family {(q_i, D_i)}. Duplicate maps are merged (weights summed, first position kept).
class RdsSpec {
 public:
  RdsSpec(std::vector<DeterministicMap> maps, std::vector<double> weights) {
    detail::require(!maps.empty(), "RdsSpec: maps list must be non-empty");
    detail::require(maps.size() == weights.size(), "RdsSpec: maps and weights must have equal length");
    const std::size_t s = maps.front().dim();
    double total = 0.0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      detail::require(maps[i].dim() == s, "RdsSpec: map " + std::to_string(i) + " has a different dimension");
      detail::require(std::isfinite(weights[i]) && weights[i] >= 0.0,
                      "RdsSpec: weight " + std::to_string(i) + " must be >= 0");
      total += weights[i];
    }
    detail::require(std::abs(total - 1.0) <= kStochasticTol,
                    "RdsSpec: weights sum to " + std::to_string(total) + ", violates sum = 1");

    for (std::size_t i = 0; i < maps.size(); ++i) {
      auto it = std::find(maps_.begin(), maps_.end(), maps[i]);
      if (it == maps_.end()) {
        maps_.push_back(std::move(maps[i]));
        weights_.push_back(weights[i]);
      } else {
        weights_[static_cast<std::size_t>(it - maps_.begin())] += weights[i];
      }
    }
  }

  std::size_t dim() const noexcept { return maps_.front().dim(); }
  std::size_t size() const noexcept { return maps_.size(); }
  const std::vector<DeterministicMap>& maps() const noexcept { return maps_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  ProbVector weight_vector() const {
    return ProbVector(Eigen::Map<const Vector>(weights_.data(), static_cast<Eigen::Index>(weights_.size())));
  }

 private:
  std::vector<DeterministicMap> maps_;
  std::vector<double> weights_;
};

inline constexpr double kMaxEps = 0.5;

/// An RDS together with its intrinsic noise N = exp(eps * Q).
class RmsSpec {
 public:
  RmsSpec(RdsSpec rds, GeneratorMatrix q, double eps)
      : rds_(std::move(rds)), q_(std::move(q)), eps_(eps), n_(checked_noise(rds_, q_, eps)) {}

  const RdsSpec& rds() const noexcept { return rds_; }
  const GeneratorMatrix& generator() const noexcept { return q_; }
  double eps() const noexcept { return eps_; }
  const StochMatrix& noise() const noexcept { return n_; }
  std::size_t dim() const noexcept { return rds_.dim(); }

 private:
  static StochMatrix checked_noise(const RdsSpec& rds, const GeneratorMatrix& q, double eps) {
    detail::require(q.dim() == rds.dim(), "RmsSpec: Q dimension does not match the RDS");
    detail::require(std::isfinite(eps) && eps >= 0.0 && eps <= kMaxEps, "RmsSpec: eps must lie in [0, 0.5]");
    return mat_exp(q, eps);
  }

  RdsSpec rds_;
  GeneratorMatrix q_;
  double eps_;
  StochMatrix n_;
};

/// M = sum_i q_i D_i.
inline StochMatrix mean_matrix(const RdsSpec& rds) {
  const auto s = static_cast<Eigen::Index>(rds.dim());
  Matrix m = Matrix::Zero(s, s);
  for (std::size_t k = 0; k < rds.size(); ++k) {
    const auto& map = rds.maps()[k];
    for (Eigen::Index i = 0; i < s; ++i) m(i, map(static_cast<int>(i))) += rds.weights()[k];
  }
  return StochMatrix(std::move(m));
}

/// Greedy decomposition of a stochastic matrix into weighted deterministic maps.
///
/// Each round sends every row to its largest residual entry (ties to the
/// lowest column), takes the smallest of those entries as the weight and
/// subtracts it. At least one residual entry hits zero per round, so at most
/// s(s-1)+1 maps are produced. Stops once the residual row mass is < 1e-12.
inline RdsSpec decompose_markov(const StochMatrix& m) {
  const auto s = static_cast<Eigen::Index>(m.dim());
  detail::require(s >= 2, "decompose_markov: state space must have at least 2 states");
  Matrix residual = m.matrix();
  std::vector<DeterministicMap> maps;
  std::vector<double> weights;
  const std::size_t max_maps = static_cast<std::size_t>(s * (s - 1) + 1);

  while (maps.size() < max_maps && residual.rowwise().sum().maxCoeff() >= 1e-12) {
    std::vector<int> target(static_cast<std::size_t>(s));
    double weight = 1.0;
    for (Eigen::Index i = 0; i < s; ++i) {
      Eigen::Index best = 0;
      // Entries within rounding of each other count as tied.
      for (Eigen::Index j = 1; j < s; ++j)
        if (residual(i, j) > residual(i, best) + 1e-12) best = j;
      target[static_cast<std::size_t>(i)] = static_cast<int>(best);
      weight = std::min(weight, residual(i, best));
    }
    if (weight <= 0.0) break;  // rows exhausted unevenly (input rows off by rounding)
    for (Eigen::Index i = 0; i < s; ++i) residual(i, target[static_cast<std::size_t>(i)]) -= weight;
    maps.emplace_back(std::move(target));
    weights.push_back(weight);
  }

  double total = 0.0;
  for (double w : weights) total += w;
  for (double& w : weights) w /= total;
  return RdsSpec(std::move(maps), std::move(weights));
}

/// D * N: row i of the result is row D(i) of N.
inline StochMatrix perturbed_matrix(const DeterministicMap& d, const StochMatrix& n) {
  detail::require(d.dim() == n.dim(), "perturbed_matrix: dimension mismatch");
  const auto s = static_cast<Eigen::Index>(d.dim());
  Matrix out(s, s);
  for (Eigen::Index i = 0; i < s; ++i) out.row(i) = n.matrix().row(d(static_cast<int>(i)));
  return StochMatrix(std::move(out));
}

inline constexpr std::size_t kMaxEnumerationDim = 6;

/// All s^s maps, lexicographic in their target arrays.
inline std::vector<DeterministicMap> enumerate_maps(std::size_t s) {
  detail::require(s >= 2 && s <= kMaxEnumerationDim, "enumerate_maps: s must lie in [2, 6]");
  std::vector<DeterministicMap> out;
  std::vector<int> target(s, 0);
  while (true) {
    out.emplace_back(target);
    std::size_t pos = s;
    while (pos > 0) {
      --pos;
      if (++target[pos] < static_cast<int>(s)) break;
      target[pos] = 0;
      if (pos == 0) return out;
    }
  }
}

enum class MapKind { constant, permutation, partial };

inline const char* to_string(MapKind k) {
  switch (k) {
    case MapKind::constant: return "constant";
    case MapKind::permutation: return "permutation";
    case MapKind::partial: return "partial";
  }
  return "?";
}

struct MapClassification {
  int constant = 0;
  int permutation = 0;
  int partial = 0;
  std::vector<MapKind> labels;
};

inline MapKind classify(const DeterministicMap& d) {
  if (d.is_constant()) return MapKind::constant;
  if (d.is_permutation()) return MapKind::permutation;
  return MapKind::partial;
}

inline MapClassification classify_maps(const std::vector<DeterministicMap>& maps) {
  MapClassification c;
  c.labels.reserve(maps.size());
  for (const auto& d : maps) {
    const MapKind k = classify(d);
    c.labels.push_back(k);
    switch (k) {
      case MapKind::constant: ++c.constant; break;
      case MapKind::permutation: ++c.permutation; break;
      case MapKind::partial: ++c.partial; break;
    }
  }
  return c;
}

}  // namespace rdsync
