#include <cmath>
#include <gtest/gtest.h>

#include "rdsync/oracles.hpp"
#include "rdsync/random.hpp"
#include "rdsync/reference.hpp"
#include "rdsync/stochastic_core.hpp"

using namespace rdsync;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

GeneratorMatrix q2() { return reference::two_state_generator(); }

}  // namespace

// =============================================================================
// Type invariants
// =============================================================================

TEST(StochMatrix, RejectsBadRowSumAndNegativeEntries) {
  EXPECT_THROW(StochMatrix((Matrix(2, 2) << 0.5, 0.6, 0.5, 0.5).finished()), InvalidArgument);
  EXPECT_THROW(StochMatrix((Matrix(2, 2) << -0.1, 1.1, 0.5, 0.5).finished()), InvalidArgument);
  EXPECT_THROW(StochMatrix(Matrix(2, 3)), InvalidArgument);
  EXPECT_NO_THROW(StochMatrix((Matrix(2, 2) << 0.5, 0.5 + 1e-10, 0.5, 0.5).finished()));
}

TEST(GeneratorMatrix, DiagnosticNamesViolatedInvariant) {
  try {
    GeneratorMatrix((Matrix(2, 2) << -0.5, 0.5, 1.0, -1.0).finished());
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("diagonal"), std::string::npos);
  }
  try {
    GeneratorMatrix((Matrix(2, 2) << -1.0, 0.9, 1.0, -1.0).finished());
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("row sum"), std::string::npos);
  }
  EXPECT_THROW(GeneratorMatrix((Matrix(3, 3) << -1, 1.5, -0.5, 0.5, -1, 0.5, 0.5, 0.5, -1).finished()),
               InvalidArgument);
}

TEST(ProbVector, Validation) {
  EXPECT_THROW(ProbVector(Vector::Constant(3, 0.3)), InvalidArgument);
  EXPECT_THROW(ProbVector((Vector(2) << 1.5, -0.5).finished()), InvalidArgument);
  EXPECT_NEAR(ProbVector::uniform(4)(2), 0.25, 0.0);
}

// =============================================================================
// mat_exp
// =============================================================================

TEST(MatExp, ZeroEpsIsIdentity) {
  const StochMatrix n = mat_exp(q2(), 0.0);
  EXPECT_EQ(n.matrix(), Matrix::Identity(2, 2));
}

TEST(MatExp, TwoStateClosedForm) {
  // exp(eps Q2) = 1/2 [[1 + e^{-2eps}, 1 - e^{-2eps}], [1 - e^{-2eps}, 1 + e^{-2eps}]]
  for (double eps : {0.001, 0.01, 0.05, 0.1, 0.3, 0.5, 2.0}) {
    const StochMatrix n = mat_exp(q2(), eps);
    const double d = 0.5 * (1.0 + std::exp(-2.0 * eps));
    const double o = 0.5 * (1.0 - std::exp(-2.0 * eps));
    EXPECT_NEAR(n(0, 0), d, 1e-12) << eps;
    EXPECT_NEAR(n(0, 1), o, 1e-12) << eps;
    EXPECT_NEAR(n(1, 0), o, 1e-12) << eps;
    EXPECT_NEAR(n(1, 1), d, 1e-12) << eps;
  }
  const StochMatrix n = mat_exp(q2(), 0.1);
  EXPECT_NEAR(n(0, 0), 0.909365, 5e-7);
  EXPECT_NEAR(n(0, 1), 0.090635, 5e-7);
}

TEST(MatExp, MatchesDirectTaylorSeriesS5) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const GeneratorMatrix q = random_generator_matrix(5, seed);
    const Matrix oracle = oracle::taylor_exp(q.matrix(), 0.05, 30);
    EXPECT_LE(max_abs_diff(mat_exp(q, 0.05).matrix(), oracle), 1e-10) << seed;
  }
}

TEST(MatExp, RejectsNegativeEps) { EXPECT_THROW(mat_exp(q2(), -0.1), InvalidArgument); }

TEST(MatExpProperty, StochasticAndSemigroup) {
  Xoshiro256 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t s = 2 + static_cast<std::size_t>(rng.uniform() * 11);  // 2..12
    const GeneratorMatrix q = random_generator_matrix(s, rng());
    const double e1 = 0.5 * rng.uniform();
    const double e2 = 0.5 * rng.uniform();
    const Matrix n1 = mat_exp(q, e1).matrix();
    const Matrix n2 = mat_exp(q, e2).matrix();
    EXPECT_GE(n1.minCoeff(), 0.0);
    EXPECT_LE((n1.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
    EXPECT_LE(max_abs_diff(n1 * n2, mat_exp(q, e1 + e2).matrix()), 1e-8) << "s=" << s;
  }
}

// =============================================================================
// first_order_N
// =============================================================================

TEST(FirstOrderN, Examples) {
  EXPECT_EQ(first_order_N(q2(), 0.0).matrix(), Matrix::Identity(2, 2));
  const Matrix n = first_order_N(q2(), 0.1).matrix();
  EXPECT_NEAR(n(0, 0), 0.9, 1e-15);
  EXPECT_NEAR(n(0, 1), 0.1, 1e-15);
  EXPECT_LE(max_abs_diff(mat_exp(q2(), 0.01).matrix(), first_order_N(q2(), 0.01).matrix()), 1e-4);
  EXPECT_THROW(first_order_N(q2(), 1.5), InvalidArgument);
  EXPECT_THROW(first_order_N(q2(), -0.01), InvalidArgument);
}

TEST(FirstOrderNProperty, GapIsSecondOrder) {
  for (std::size_t s = 2; s <= 12; ++s) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const GeneratorMatrix q = random_generator_matrix(s, seed * 31 + s);
      for (double eps = 0.005; eps <= 0.1 + 1e-12; eps += 0.005) {
        const double gap = max_abs_diff(mat_exp(q, eps).matrix(), first_order_N(q, eps).matrix());
        EXPECT_LE(gap, 2.0 * eps * eps) << "s=" << s << " eps=" << eps;
      }
    }
  }
}

// =============================================================================
// stationary_distribution
// =============================================================================

TEST(Stationary, TwoStateMean) {
  const ProbVector pi = stationary_distribution(reference::two_state_mean());
  EXPECT_NEAR(pi(0), 3.0 / 7.0, 1e-10);
  EXPECT_NEAR(pi(1), 4.0 / 7.0, 1e-10);
}

TEST(Stationary, IdentityFromUniformStaysUniform) {
  const ProbVector pi = stationary_distribution(StochMatrix::identity(3));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(pi(i), 1.0 / 3.0, 1e-15);
}

TEST(Stationary, PeriodicChainIsRejected) {
  const StochMatrix cycle((Matrix(2, 2) << 0, 1, 1, 0).finished());
  EXPECT_THROW(stationary_distribution(cycle, 1e-12), NotConverged);
}

TEST(Stationary, IterationBudgetExhausted) {
  // Slowly mixing chain: second eigenvalue 1 - 2e-6.
  const StochMatrix slow((Matrix(2, 2) << 1 - 1e-6, 1e-6, 1e-6, 1 - 1e-6).finished());
  const StochMatrix lopsided((Matrix(2, 2) << 1 - 1e-6, 1e-6, 3e-6, 1 - 3e-6).finished());
  EXPECT_NO_THROW(stationary_distribution(slow, 1e-12, 10));  // uniform is already stationary
  EXPECT_THROW(stationary_distribution(lopsided, 1e-12, 10), NotConverged);
}

TEST(StationaryProperty, AgreesWithDirectSolve) {
  Xoshiro256 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = static_cast<Eigen::Index>(2 + trial % 6);
    Matrix m(s, s);
    for (Eigen::Index i = 0; i < s; ++i) {
      for (Eigen::Index j = 0; j < s; ++j) m(i, j) = rng.uniform() + 0.01;
      m.row(i) /= m.row(i).sum();
    }
    const StochMatrix sm(m);
    const ProbVector pi = stationary_distribution(sm);
    EXPECT_LE((m.transpose() * pi.vector() - pi.vector()).lpNorm<1>(), 1e-12);
    EXPECT_LE((pi.vector() - oracle::stationary_by_solve(m)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ClassStructure, PeriodsAndClosedness) {
  // 0 -> 1 -> 2 -> 1 (class {1,2} closed, period 2), 0 transient.
  Matrix m(3, 3);
  m << 0.5, 0.5, 0, 0, 0, 1, 0, 1, 0;
  const ClassStructure cs = class_structure(m);
  ASSERT_EQ(cs.classes.size(), 2u);
  EXPECT_EQ(chain_period(m), 2);
  EXPECT_EQ(chain_period(Matrix::Identity(3, 3)), 1);
}

TEST(LimitingDistribution, CesaroAverageOnPeriodicChain) {
  const StochMatrix cycle((Matrix(2, 2) << 0, 1, 1, 0).finished());
  const LimitingDistribution lim = limiting_distribution(cycle, ProbVector::point_mass(2, 0));
  EXPECT_EQ(lim.period, 2);
  EXPECT_NEAR(lim.distribution(0), 0.5, 1e-15);
}

// =============================================================================
// fundamental_sum_apply
// =============================================================================

TEST(FundamentalSum, Examples) {
  const ProbVector uniform = ProbVector::uniform(2);
  EXPECT_NEAR(fundamental_sum_apply((Matrix(2, 2) << 0.2, 0.6, 0.6, 0.2).finished(), uniform), 5.0, 1e-12);
  EXPECT_NEAR(fundamental_sum_apply((Matrix(2, 2) << 0.1, 0.5, 0.5, 0.1).finished(), uniform), 2.5, 1e-12);
  EXPECT_NEAR(fundamental_sum_apply(Matrix::Zero(3, 3), ProbVector::uniform(3)), 1.0, 0.0);
}

TEST(FundamentalSum, SingularIsInfiniteExpectedTime) {
  EXPECT_THROW(fundamental_sum_apply((Matrix(2, 2) << 0.3, 0.7, 0.7, 0.3).finished(), ProbVector::uniform(2)),
               InfiniteExpectedTime);
}

TEST(FundamentalSum, RejectsInvalidInput) {
  EXPECT_THROW(fundamental_sum_apply((Matrix(2, 2) << 0.6, 0.6, 0.1, 0.1).finished(), ProbVector::uniform(2)),
               InvalidArgument);
  EXPECT_THROW(fundamental_sum_apply(Matrix::Zero(2, 2), ProbVector::uniform(3)), InvalidArgument);
}

TEST(FundamentalSumProperty, EqualsNeumannSeries) {
  Xoshiro256 rng(99);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + trial % 5);
    Matrix mbar(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) mbar(i, j) = rng.uniform();
      mbar.row(i) *= (0.9 * rng.uniform()) / mbar.row(i).sum();
    }
    const double rho = mbar.eigenvalues().cwiseAbs().maxCoeff();
    if (rho > 0.9) continue;
    Vector mu = Vector::NullaryExpr(n, [&](Eigen::Index) { return rng.uniform(); });
    mu /= mu.sum();
    const ProbVector mu0(mu);
    EXPECT_NEAR(fundamental_sum_apply(mbar, mu0), oracle::neumann_partial_sum(mbar, mu, 200), 1e-8);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

// =============================================================================
// random_generator_matrix
// =============================================================================

TEST(RandomGenerator, TwoStateIsForced) {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 123456789ULL})
    EXPECT_EQ(random_generator_matrix(2, seed).matrix(), q2().matrix());
}

TEST(RandomGenerator, DeterministicAndValid) {
  const GeneratorMatrix a = random_generator_matrix(3, 42);
  const GeneratorMatrix b = random_generator_matrix(3, 42);
  EXPECT_EQ(a.matrix(), b.matrix());
  EXPECT_LE(a.matrix().rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NE(random_generator_matrix(3, 43).matrix(), a.matrix());
  EXPECT_THROW(random_generator_matrix(1, 0), InvalidArgument);
}

TEST(Random, Xoshiro256ReferenceOutput) {
  // Frozen first outputs for seed 0 (splitmix64-seeded xoshiro256**).
  Xoshiro256 a(0);
  Xoshiro256 b(0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
  std::uint64_t sm = 0;
  EXPECT_EQ(splitmix64(sm), 0xE220A8397B1DCDAFULL);
  EXPECT_NE(substream_seed(1, 0), substream_seed(1, 1));
}

TEST(Random, SampleIndexSkipsZeroMassAtRoundingEdge) {
  const std::vector<double> cdf{0.3, 0.9999999999, 0.9999999999};
  EXPECT_EQ(sample_index(cdf, 0.1), 0u);
  EXPECT_EQ(sample_index(cdf, 0.5), 1u);
  EXPECT_EQ(sample_index(cdf, 0.99999999999), 1u);
}
