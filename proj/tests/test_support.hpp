#pragma once

// Seeded generators for property tests.

#include <vector>

#include "rdsync/random.hpp"
#include "rdsync/rds_model.hpp"

namespace rdsync::gen {

/// Up to `max_maps` random maps on s states with random positive weights.
inline RdsSpec random_rds(std::size_t s, std::size_t max_maps, Xoshiro256& rng) {
  std::vector<DeterministicMap> maps;
  std::vector<double> weights;
  const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(max_maps));
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<int> t(s);
    for (auto& v : t) v = static_cast<int>(rng.uniform() * static_cast<double>(s));
    maps.emplace_back(std::move(t));
    weights.push_back(0.05 + rng.uniform());
    total += weights.back();
  }
  for (auto& w : weights) w /= total;
  return RdsSpec(std::move(maps), std::move(weights));
}

/// A random RDS that always contains a constant map, so every pair synchronizes.
inline RdsSpec random_synchronizing_rds(std::size_t s, std::size_t max_maps, Xoshiro256& rng) {
  RdsSpec base = random_rds(s, max_maps, rng);
  std::vector<DeterministicMap> maps = base.maps();
  std::vector<double> weights = base.weights();
  maps.push_back(DeterministicMap::constant(s, static_cast<int>(rng.uniform() * static_cast<double>(s))));
  weights.push_back(0.2);
  for (auto& w : weights) w /= 1.2;
  return RdsSpec(std::move(maps), std::move(weights));
}

}  // namespace rdsync::gen
