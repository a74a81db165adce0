#pragma once

// The two-state worked example: M = [[0.2, 0.8], [0.6, 0.4]], its two
// decompositions into deterministic maps, and the unique two-state Q.

#include "rdsync/rds_model.hpp"
#include "rdsync/stochastic_core.hpp"

namespace rdsync::reference {

inline StochMatrix two_state_mean() { return StochMatrix((Matrix(2, 2) << 0.2, 0.8, 0.6, 0.4).finished()); }

inline DeterministicMap swap() { return DeterministicMap({1, 0}); }

/// 0.6 swap + 0.2 (all -> 2) + 0.2 identity.
inline RdsSpec decomposition_one() {
  return RdsSpec({swap(), DeterministicMap::constant(2, 1), DeterministicMap::identity(2)}, {0.6, 0.2, 0.2});
}

/// 0.5 swap + 0.3 (all -> 2) + 0.1 identity + 0.1 (all -> 1).
inline RdsSpec decomposition_two() {
  return RdsSpec({swap(), DeterministicMap::constant(2, 1), DeterministicMap::identity(2),
                  DeterministicMap::constant(2, 0)},
                 {0.5, 0.3, 0.1, 0.1});
}

inline GeneratorMatrix two_state_generator() {
  return GeneratorMatrix((Matrix(2, 2) << -1.0, 1.0, 1.0, -1.0).finished());
}

/// Decomposition one perturbed by exp(eps * Q2).
inline RmsSpec two_state_rms(double eps = 0.01) { return RmsSpec(decomposition_one(), two_state_generator(), eps); }

}  // namespace rdsync::reference
