#pragma once

#include <cstdint>

#include "frost/common.hpp"

namespace frost {

struct Sample {
  Vec x;
  int label = 0;
};

enum class DifficultyTier { kEasy, kBoundary };

struct DatasetSpec {
  int classes = 4;
  int per_class = 750;
  int d_in = 16;
  // Fraction of each class's samples placed near inter-class midpoints.
  double boundary_fraction = 0.25;
  std::uint64_t seed = 42;
};

struct SyntheticDataset {
  std::vector<Sample> samples;
  std::vector<DifficultyTier> tiers;  // aligned with samples
  std::vector<Vec> class_means;
  int classes = 0;
};

// Gaussian class clusters around mutually orthogonal means with unit
// per-coordinate noise, truncated at radius 2*sqrt(d_in) so every easy
// sample stays within twice the RMS noise radius of its class mean.
// Boundary samples sit at the midpoint between their class mean and a
// randomly chosen other class, with half-scale noise. Deterministic per
// seed; class counts are exactly balanced.
SyntheticDataset generate_dataset(const DatasetSpec& spec);

}  // namespace frost
