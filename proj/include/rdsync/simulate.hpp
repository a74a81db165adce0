#pragma once

// Monte Carlo realization of the coupled RDS/RMS chain and the stopping
// times of its synchronized/desynchronized phases.
//
// Sampling contract (reproducible across implementations given the PRNG):
// at each step t the map index is drawn by inverse CDF over the RDS weights
// (one uniform draw), x moves deterministically, then y' is drawn by inverse
// CDF over row maps[i](y) of N in state order (one uniform draw).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rdsync/error.hpp"
#include "rdsync/random.hpp"
#include "rdsync/rds_model.hpp"
#include "rdsync/stats.hpp"
#include "rdsync/two_point.hpp"

namespace rdsync {

struct CoupledStep {
  int x = 0;
  int y = 0;
  int map_index = 0;  // map drawn at this time, driving the move to t+1
};

struct CoupledTrajectory {
  std::shared_ptr<const RmsSpec> spec;
  std::uint64_t seed = 0;
  std::vector<CoupledStep> steps;  // n + 1 entries, t = 0..n

  std::size_t size() const noexcept { return steps.size(); }
  bool synced(std::size_t t) const { return steps[t].x == steps[t].y; }
  std::vector<bool> sync_indicator() const {
    std::vector<bool> out(steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t) out[t] = synced(t);
    return out;
  }
};

namespace detail {

inline std::vector<double> cumulative(std::span<const double> w) {
  std::vector<double> c(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) c[i] = (acc += w[i]);
  return c;
}

/// Step-by-step driver shared by the recording and the counting entry points.
class CoupledStepper {
 public:
  CoupledStepper(const RmsSpec& rms, int x0, int y0, std::uint64_t seed)
      : rds_(rms.rds()), rng_(seed), x_(x0), y_(y0) {
    const auto s = static_cast<int>(rms.dim());
    require(x0 >= 0 && x0 < s && y0 >= 0 && y0 < s, "run_coupled: initial states out of range");
    weight_cdf_ = cumulative(rds_.weights());
    const Matrix& n = rms.noise().matrix();
    noise_cdf_.resize(static_cast<std::size_t>(s));
    for (int r = 0; r < s; ++r) {
      std::vector<double> row(static_cast<std::size_t>(s));
      for (int c = 0; c < s; ++c) row[static_cast<std::size_t>(c)] = n(r, c);
      noise_cdf_[static_cast<std::size_t>(r)] = cumulative(row);
    }
  }

  int x() const noexcept { return x_; }
  int y() const noexcept { return y_; }

  int draw_map() { return static_cast<int>(sample_index(weight_cdf_, rng_.uniform())); }

  void apply(int map_index) {
    const auto& d = rds_.maps()[static_cast<std::size_t>(map_index)];
    x_ = d(x_);
    const int row = d(y_);
    y_ = static_cast<int>(sample_index(noise_cdf_[static_cast<std::size_t>(row)], rng_.uniform()));
  }

 private:
  const RdsSpec& rds_;
  Xoshiro256 rng_;
  int x_;
  int y_;
  std::vector<double> weight_cdf_;
  std::vector<std::vector<double>> noise_cdf_;
};

}  // namespace detail

/// Length-(n+1) realization of H_t = (X_t, Y_t, D_t). The last entry's map
/// index is drawn as well (it would drive step n+1).
inline CoupledTrajectory run_coupled(const RmsSpec& rms, int x0, int y0, long n, std::uint64_t seed) {
  detail::require(n >= 1, "run_coupled: n must be >= 1");
  detail::CoupledStepper stepper(rms, x0, y0, seed);
  CoupledTrajectory traj;
  traj.spec = std::make_shared<const RmsSpec>(rms);
  traj.seed = seed;
  traj.steps.reserve(static_cast<std::size_t>(n) + 1);
  for (long t = 0; t <= n; ++t) {
    const int m = stepper.draw_map();
    traj.steps.push_back({stepper.x(), stepper.y(), m});
    if (t < n) stepper.apply(m);
  }
  return traj;
}

/// Number of synchronized time points among t = 0..n, without storing the path.
/// Agrees with run_coupled on the same arguments.
inline long count_synchronized(const RmsSpec& rms, int x0, int y0, long n, std::uint64_t seed) {
  detail::require(n >= 1, "count_synchronized: n must be >= 1");
  detail::CoupledStepper stepper(rms, x0, y0, seed);
  long count = 0;
  for (long t = 0; t <= n; ++t) {
    if (stepper.x() == stepper.y()) ++count;
    const int m = stepper.draw_map();
    if (t < n) stepper.apply(m);
  }
  return count;
}

struct CensoredTail {
  bool present = false;
  long sync_steps = 0;    // synchronized points of the incomplete cycle
  long desync_steps = 0;  // desynchronized points of the incomplete cycle
};

struct CycleTimes {
  /// Initial unsynchronized run-in before the first synchronized point.
  std::optional<long> gamma0;
  bool gamma0_censored = false;  // the trajectory never synchronized
  std::vector<long> taus;
  std::vector<long> gammas;
  std::vector<long> Ts;
  std::vector<long> Ws;
  CensoredTail tail;
};

/// Splits a synchronization indicator into complete (tau, gamma) cycles.
/// tau counts synchronized points from the cycle start to the first
/// desynchronized point; gamma counts desynchronized points up to the next
/// synchronized point, which starts the next cycle.
inline CycleTimes extract_cycle_times(const std::vector<bool>& synced) {
  detail::require(synced.size() >= 2, "extract_cycle_times: trajectory must have at least 2 points");
  const long len = static_cast<long>(synced.size());
  auto at = [&](long t) { return static_cast<bool>(synced[static_cast<std::size_t>(t)]); };

  CycleTimes out;
  long c = 0;
  if (!at(0)) {
    while (c < len && !at(c)) ++c;
    out.gamma0 = c;
    if (c == len) {
      out.gamma0_censored = true;
      return out;
    }
  }
  long w = 0;
  while (c < len) {
    long d = c;
    while (d < len && at(d)) ++d;
    if (d == len) {
      out.tail = {true, len - c, 0};
      break;
    }
    long e = d;
    while (e < len && !at(e)) ++e;
    if (e == len) {
      out.tail = {true, d - c, len - d};
      break;
    }
    out.taus.push_back(d - c);
    out.gammas.push_back(e - d);
    out.Ts.push_back(e - c);
    w += e - c;
    out.Ws.push_back(w);
    c = e;
  }
  return out;
}

inline CycleTimes extract_cycle_times(const CoupledTrajectory& traj) {
  return extract_cycle_times(traj.sync_indicator());
}

/// Fraction of time points with x_t = y_t.
inline double empirical_sync_rate(const std::vector<bool>& synced) {
  detail::require(!synced.empty(), "empirical_sync_rate: empty indicator");
  return static_cast<double>(std::count(synced.begin(), synced.end(), true)) / static_cast<double>(synced.size());
}

inline double empirical_sync_rate(const CoupledTrajectory& traj) { return empirical_sync_rate(traj.sync_indicator()); }

struct GeometricFitReport {
  std::size_t samples = 0;
  double mean = 0.0;
  double variance = 0.0;
  double expected_mean = 0.0;  // 1 / eps_eff
  double chi_square = 0.0;
  int dof = 0;
  double p_value = 0.0;
};

inline constexpr std::size_t kMinGeometricSamples = 200;

/// Chi-square goodness of fit of the complete tau samples against
/// Geometric(eps_eff) on {1, 2, ...}. Consecutive values are pooled into
/// bins of expected count >= max(5, samples/50); the last bin is the open tail.
inline GeometricFitReport tau_geometric_check(std::span<const long> taus, double eps_eff) {
  detail::require(eps_eff > 0.0 && eps_eff < 1.0, "tau_geometric_check: eps_eff must lie in (0, 1)");
  if (taus.size() < kMinGeometricSamples)
    throw InsufficientSamples("tau_geometric_check: need at least 200 complete tau samples, got " +
                              std::to_string(taus.size()));
  const double n = static_cast<double>(taus.size());
  const double target = std::max(5.0, n / 50.0);
  const double q = 1.0 - eps_eff;

  // upper[b] = last value in bin b; the tail bin has no upper bound.
  std::vector<long> upper;
  std::vector<double> expected;
  double acc = 0.0;
  double tail = 1.0;  // P(tau >= k)
  long k = 1;
  while (tail * n >= 2.0 * target) {
    const double pk = eps_eff * std::pow(q, static_cast<double>(k - 1));
    acc += pk;
    tail -= pk;
    if (acc * n >= target) {
      upper.push_back(k);
      expected.push_back(acc * n);
      acc = 0.0;
    }
    ++k;
  }
  // Remaining mass (partial bin plus tail) forms the last, open bin.
  expected.push_back((acc + std::max(tail, 0.0)) * n);

  std::vector<double> observed(expected.size(), 0.0);
  std::vector<double> values;
  values.reserve(taus.size());
  for (long t : taus) {
    detail::require(t >= 1, "tau_geometric_check: tau samples must be >= 1");
    values.push_back(static_cast<double>(t));
    const auto it = std::lower_bound(upper.begin(), upper.end(), t);
    observed[static_cast<std::size_t>(it - upper.begin())] += 1.0;
  }

  GeometricFitReport r;
  r.samples = taus.size();
  r.mean = stats::mean(values);
  r.variance = stats::variance(values);
  r.expected_mean = 1.0 / eps_eff;
  for (std::size_t b = 0; b < expected.size(); ++b) {
    const double diff = observed[b] - expected[b];
    r.chi_square += diff * diff / expected[b];
  }
  r.dof = static_cast<int>(expected.size()) - 1;
  r.p_value = r.dof > 0 ? stats::chi_square_sf(r.chi_square, r.dof) : 1.0;
  return r;
}

struct RdsPaths {
  std::vector<int> map_sequence;       // n draws, map_sequence[t] drives t -> t+1
  std::vector<std::vector<int>> paths;  // one per initial state, n + 1 points each
};

/// Several single-point paths driven by one shared map sequence.
inline RdsPaths run_single_rds(const RdsSpec& rds, const std::vector<int>& x0s, long n, std::uint64_t seed) {
  detail::require(n >= 1, "run_single_rds: n must be >= 1");
  const auto s = static_cast<int>(rds.dim());
  for (int x : x0s) detail::require(x >= 0 && x < s, "run_single_rds: initial state out of range");
  const std::vector<double> cdf = detail::cumulative(rds.weights());
  Xoshiro256 rng(seed);
  RdsPaths out;
  out.map_sequence.reserve(static_cast<std::size_t>(n));
  for (long t = 0; t < n; ++t) out.map_sequence.push_back(static_cast<int>(sample_index(cdf, rng.uniform())));
  for (int x0 : x0s) {
    std::vector<int> p;
    p.reserve(static_cast<std::size_t>(n) + 1);
    p.push_back(x0);
    for (int m : out.map_sequence) p.push_back(rds.maps()[static_cast<std::size_t>(m)](p.back()));
    out.paths.push_back(std::move(p));
  }
  return out;
}

/// First t with a[t] == b[t], if any.
inline std::optional<long> first_meeting_time(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t t = 0; t < n; ++t)
    if (a[t] == b[t]) return static_cast<long>(t);
  return std::nullopt;
}

struct TransitionCheck {
  std::size_t cells_checked = 0;
  std::size_t cells_failed = 0;
  double worst_z = 0.0;
  bool passed() const noexcept { return cells_failed == 0; }
};

/// Compares one-step empirical transition counts of (x, y) with the kernel
/// of `w`: each cell with expected count >= min_expected must lie within
/// z_limit binomial standard errors.
inline TransitionCheck transition_frequency_check(const CoupledTrajectory& traj, const ProductChainMatrix& w,
                                                  double min_expected = 25.0, double z_limit = 3.0) {
  const ProductIndex& idx = w.index();
  const auto n = static_cast<Eigen::Index>(idx.size());
  Matrix counts = Matrix::Zero(n, n);
  for (std::size_t t = 0; t + 1 < traj.steps.size(); ++t) {
    const auto& a = traj.steps[t];
    const auto& b = traj.steps[t + 1];
    counts(static_cast<Eigen::Index>(idx.index_of(a.x, a.y)), static_cast<Eigen::Index>(idx.index_of(b.x, b.y))) +=
        1.0;
  }
  TransitionCheck out;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double from = counts.row(r).sum();
    for (Eigen::Index c = 0; c < n; ++c) {
      const double p = w.kernel()(r, c);
      const double expected = from * p;
      if (expected < min_expected) continue;
      ++out.cells_checked;
      const double se = std::sqrt(from * p * (1.0 - p));
      const double z = se > 0.0 ? std::abs(counts(r, c) - expected) / se : 0.0;
      out.worst_z = std::max(out.worst_z, z);
      if (z > z_limit) ++out.cells_failed;
    }
  }
  return out;
}

/// Empirical law of the unsynchronized pair entered at each desynchronization.
struct DesyncEntries {
  Vector distribution;  // over the unsynchronized product indices
  std::size_t events = 0;
};

inline DesyncEntries desync_entries(const CoupledTrajectory& traj) {
  const ProductIndex idx(traj.spec->dim());
  Vector counts = Vector::Zero(static_cast<Eigen::Index>(idx.unsync_count()));
  DesyncEntries out;
  for (std::size_t t = 1; t < traj.steps.size(); ++t) {
    if (traj.synced(t - 1) && !traj.synced(t)) {
      counts(static_cast<Eigen::Index>(idx.index_of(traj.steps[t].x, traj.steps[t].y))) += 1.0;
      ++out.events;
    }
  }
  out.distribution = out.events > 0 ? Vector(counts / static_cast<double>(out.events)) : counts;
  return out;
}

}  // namespace rdsync
