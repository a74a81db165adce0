#include <cmath>
#include <gtest/gtest.h>
#include <numeric>

#include "rdsync/reference.hpp"
#include "rdsync/simulate.hpp"
#include "test_support.hpp"

using namespace rdsync;

namespace {

std::vector<bool> bits(std::initializer_list<int> xs) {
  std::vector<bool> out;
  for (int x : xs) out.push_back(x != 0);
  return out;
}

// Inverse-CDF Geometric(p) on {1, 2, ...}.
std::vector<long> geometric_samples(double p, std::size_t n, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  std::vector<long> out;
  out.reserve(n);
  const double lq = std::log1p(-p);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = 1.0 - rng.uniform();  // (0, 1]
    out.push_back(1 + static_cast<long>(std::floor(std::log(u) / lq)));
  }
  return out;
}

}  // namespace

// =============================================================================
// run_coupled
// =============================================================================

TEST(RunCoupled, SameSeedSamePath) {
  const RmsSpec rms = reference::two_state_rms(0.05);
  const CoupledTrajectory a = run_coupled(rms, 0, 1, 2000, 99);
  const CoupledTrajectory b = run_coupled(rms, 0, 1, 2000, 99);
  const CoupledTrajectory c = run_coupled(rms, 0, 1, 2000, 100);
  ASSERT_EQ(a.size(), 2001u);
  bool same = true;
  bool differs = false;
  for (std::size_t t = 0; t < a.size(); ++t) {
    same &= a.steps[t].x == b.steps[t].x && a.steps[t].y == b.steps[t].y &&
            a.steps[t].map_index == b.steps[t].map_index;
    differs |= a.steps[t].map_index != c.steps[t].map_index;
  }
  EXPECT_TRUE(same);
  EXPECT_TRUE(differs);
}

TEST(RunCoupled, RejectsBadArguments) {
  const RmsSpec rms = reference::two_state_rms(0.05);
  EXPECT_THROW(run_coupled(rms, 0, 1, 0, 1), InvalidArgument);
  EXPECT_THROW(run_coupled(rms, 0, 2, 10, 1), InvalidArgument);
}

TEST(RunCoupledProperty, XFollowsTheDrawnMap) {
  Xoshiro256 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t s = 2 + static_cast<std::size_t>(trial % 4);
    const RmsSpec rms(gen::random_rds(s, 5, rng), random_generator_matrix(s, rng()), 0.2 * rng.uniform());
    const CoupledTrajectory tr = run_coupled(rms, 0, static_cast<int>(s - 1), 500, rng());
    for (std::size_t t = 0; t + 1 < tr.size(); ++t) {
      const auto& d = rms.rds().maps()[static_cast<std::size_t>(tr.steps[t].map_index)];
      ASSERT_EQ(tr.steps[t + 1].x, d(tr.steps[t].x));
    }
    const auto ind = tr.sync_indicator();
    EXPECT_EQ(count_synchronized(rms, 0, static_cast<int>(s - 1), 500, tr.seed),
              std::count(ind.begin(), ind.end(), true));
  }
}

TEST(RunCoupled, ZeroNoiseNeverLeavesSynchronization) {
  const RmsSpec rms = reference::two_state_rms(0.0);
  const CoupledTrajectory tr = run_coupled(rms, 1, 1, 10000, 3);
  for (std::size_t t = 0; t < tr.size(); ++t) ASSERT_TRUE(tr.synced(t));
}

// =============================================================================
// extract_cycle_times / empirical_sync_rate
// =============================================================================

TEST(CycleTimes, SingleCompleteCycle) {
  const CycleTimes c = extract_cycle_times(bits({1, 1, 1, 0, 0, 0, 1}));
  EXPECT_FALSE(c.gamma0.has_value());
  ASSERT_EQ(c.taus.size(), 1u);
  EXPECT_EQ(c.taus[0], 3);
  EXPECT_EQ(c.gammas[0], 3);
  EXPECT_EQ(c.Ts[0], 6);
  EXPECT_EQ(c.Ws[0], 6);
  EXPECT_TRUE(c.tail.present);
  EXPECT_EQ(c.tail.sync_steps, 1);
}

TEST(CycleTimes, Alternating) {
  const CycleTimes c = extract_cycle_times(bits({1, 0, 1, 0, 1}));
  EXPECT_EQ(c.taus, (std::vector<long>{1, 1}));
  EXPECT_EQ(c.gammas, (std::vector<long>{1, 1}));
  EXPECT_EQ(c.Ws, (std::vector<long>{2, 4}));
}

TEST(CycleTimes, AllSynchronizedIsOneCensoredTau) {
  const CycleTimes c = extract_cycle_times(std::vector<bool>(50, true));
  EXPECT_TRUE(c.taus.empty());
  EXPECT_TRUE(c.tail.present);
  EXPECT_EQ(c.tail.sync_steps, 50);
  EXPECT_DOUBLE_EQ(empirical_sync_rate(std::vector<bool>(50, true)), 1.0);
}

TEST(CycleTimes, UnsynchronizedStart) {
  const CycleTimes c = extract_cycle_times(bits({0, 0, 1, 0, 1, 1}));
  ASSERT_TRUE(c.gamma0.has_value());
  EXPECT_EQ(*c.gamma0, 2);
  EXPECT_EQ(c.taus, (std::vector<long>{1}));
  const CycleTimes never = extract_cycle_times(bits({0, 0, 0}));
  EXPECT_TRUE(never.gamma0_censored);
  EXPECT_THROW(extract_cycle_times(bits({1})), InvalidArgument);
}

TEST(SyncRate, HalfSynchronized) { EXPECT_DOUBLE_EQ(empirical_sync_rate(bits({1, 0, 1, 0})), 0.5); }

TEST(CycleTimesProperty, LengthsReconstructTheIndicator) {
  Xoshiro256 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t len = 2 + static_cast<std::size_t>(rng.uniform() * 60);
    const double p_switch = rng.uniform();
    std::vector<bool> v(len);
    v[0] = rng.uniform() < 0.5;
    for (std::size_t t = 1; t < len; ++t) v[t] = rng.uniform() < p_switch ? !v[t - 1] : v[t - 1];
    const CycleTimes c = extract_cycle_times(v);

    std::vector<bool> rebuilt;
    if (c.gamma0) rebuilt.insert(rebuilt.end(), static_cast<std::size_t>(*c.gamma0), false);
    long w = 0;
    for (std::size_t i = 0; i < c.taus.size(); ++i) {
      ASSERT_GE(c.taus[i], 1);
      ASSERT_GE(c.gammas[i], 1);
      ASSERT_EQ(c.Ts[i], c.taus[i] + c.gammas[i]);
      w += c.Ts[i];
      ASSERT_EQ(c.Ws[i], w);
      rebuilt.insert(rebuilt.end(), static_cast<std::size_t>(c.taus[i]), true);
      rebuilt.insert(rebuilt.end(), static_cast<std::size_t>(c.gammas[i]), false);
    }
    if (c.tail.present) {
      rebuilt.insert(rebuilt.end(), static_cast<std::size_t>(c.tail.sync_steps), true);
      rebuilt.insert(rebuilt.end(), static_cast<std::size_t>(c.tail.desync_steps), false);
    }
    ASSERT_EQ(rebuilt, v);
  }
}

// =============================================================================
// statistical agreement with the kernel
// =============================================================================

TEST(Statistics, TransitionFrequenciesMatchW) {
  for (std::size_t s : {2u, 3u}) {
    const RmsSpec rms = s == 2 ? reference::two_state_rms(0.05)
                               : RmsSpec(decompose_markov(StochMatrix((Matrix(3, 3) << 0.1, 0.6, 0.3,  //
                                                                       0.5, 0.2, 0.3,                  //
                                                                       0.3, 0.3, 0.4)
                                                                          .finished())),
                                         random_generator_matrix(3, 17), 0.1);
    const CoupledTrajectory tr = run_coupled(rms, 0, 1, 100000, 41);
    const TransitionCheck chk = transition_frequency_check(tr, build_W(rms));
    EXPECT_GT(chk.cells_checked, 4u);
    EXPECT_TRUE(chk.passed()) << "worst z " << chk.worst_z;
  }
}

TEST(Statistics, SyncRateNearPrediction) {
  const RmsSpec rms = reference::two_state_rms(0.01);
  const CollapseResult c = collapse(build_W(rms), rms);
  const double predicted = predicted_sync_rate(c.collapsed, c.mu1).rate;
  const long n = 1000000;
  const double p_hat = static_cast<double>(count_synchronized(rms, 0, 0, n, 2024)) / static_cast<double>(n + 1);
  EXPECT_NEAR(p_hat, 0.95283, 0.02);
  EXPECT_NEAR(p_hat, predicted, 0.005);
}

TEST(Statistics, DesyncEntryLawApproachesMu1) {
  const RmsSpec rms = reference::two_state_rms(0.05);
  const CollapseResult c = collapse(build_W(rms), rms);
  const DesyncEntries e = desync_entries(run_coupled(rms, 0, 0, 400000, 8));
  ASSERT_GT(e.events, 1000u);
  const double tv = 0.5 * (e.distribution - c.mu1->vector()).cwiseAbs().sum();
  EXPECT_LT(tv, 0.05);
}

TEST(Statistics, TausAreUncorrelated) {
  const RmsSpec rms = reference::two_state_rms(0.05);
  const CycleTimes c = extract_cycle_times(run_coupled(rms, 0, 0, 400000, 12));
  std::vector<double> taus(c.taus.begin(), c.taus.end());
  ASSERT_GT(taus.size(), 1000u);
  EXPECT_LE(std::abs(stats::lag1_autocorrelation(taus)), 3.0 / std::sqrt(static_cast<double>(taus.size())));
}

// =============================================================================
// tau_geometric_check
// =============================================================================

TEST(GeometricCheck, AcceptsTrueGeometricSamples) {
  int passes = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const GeometricFitReport r = tau_geometric_check(geometric_samples(0.01, 2000, seed), 0.01);
    if (r.p_value >= 0.01) ++passes;
    EXPECT_GT(r.dof, 5);
  }
  EXPECT_GE(passes, 95);
}

TEST(GeometricCheck, RejectsDegenerateSamples) {
  const std::vector<long> ones(500, 1);
  const GeometricFitReport r = tau_geometric_check(ones, 0.01);
  EXPECT_LT(r.p_value, 1e-6);
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
}

TEST(GeometricCheck, NeedsEnoughSamples) {
  EXPECT_THROW(tau_geometric_check(std::vector<long>(199, 5), 0.1), InsufficientSamples);
  EXPECT_THROW(tau_geometric_check(std::vector<long>(500, 5), 0.0), InvalidArgument);
}

TEST(GeometricCheck, SimulatedTausOnReferenceSystem) {
  const RmsSpec rms = reference::two_state_rms(0.05);
  const CollapseResult c = collapse(build_W(rms), rms);
  const double eps_eff = 1.0 - c.collapsed.kernel(2, 2);
  const CycleTimes ct = extract_cycle_times(run_coupled(rms, 0, 0, 300000, 77));
  const GeometricFitReport r = tau_geometric_check(ct.taus, eps_eff);
  EXPECT_NEAR(r.mean, 1.0 / eps_eff, 0.05 / eps_eff);
  EXPECT_GT(r.p_value, 1e-3);
}

// =============================================================================
// run_single_rds
// =============================================================================

TEST(SingleRds, SharedMapSequence) {
  const RdsSpec rds = reference::decomposition_one();
  const RdsPaths p = run_single_rds(rds, {0, 1}, 300, 5);
  ASSERT_EQ(p.paths.size(), 2u);
  ASSERT_EQ(p.map_sequence.size(), 300u);
  for (const auto& path : p.paths) {
    ASSERT_EQ(path.size(), 301u);
    for (std::size_t t = 0; t < 300; ++t)
      ASSERT_EQ(path[t + 1], rds.maps()[static_cast<std::size_t>(p.map_sequence[t])](path[t]));
  }
  // Once met, the paths coincide forever.
  const auto meet = first_meeting_time(p.paths[0], p.paths[1]);
  ASSERT_TRUE(meet.has_value());
  for (auto t = static_cast<std::size_t>(*meet); t < 301; ++t) ASSERT_EQ(p.paths[0][t], p.paths[1][t]);
}

TEST(SingleRds, MeanFirstMeetingTimeIsFive) {
  const RdsSpec rds = reference::decomposition_one();
  double total = 0.0;
  const int replicas = 4000;
  for (int r = 0; r < replicas; ++r) {
    const int x0 = r % 2;
    const RdsPaths p = run_single_rds(rds, {x0, 1 - x0}, 400, substream_seed(9, static_cast<std::uint64_t>(r)));
    const auto meet = first_meeting_time(p.paths[0], p.paths[1]);
    ASSERT_TRUE(meet.has_value());
    total += static_cast<double>(*meet);
  }
  EXPECT_NEAR(total / replicas, 5.0, 0.5);
}
