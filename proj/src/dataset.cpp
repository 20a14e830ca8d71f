#include "frost/dataset.hpp"

#include <random>

namespace frost {

namespace {

// Unit-variance Gaussian noise, rejection-truncated at radius
// 2*sqrt(dim). The acceptance probability is essentially 1 for the
// dimensions used here; truncation just pins a hard support bound.
Vec truncated_noise(int dim, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double max_radius = 2.0 * std::sqrt(static_cast<double>(dim));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Vec z(dim);
    for (double& v : z) v = gauss(rng);
    if (norm(z) <= max_radius) return scaled(z, sigma);
  }
  throw NumericError("truncated_noise: rejection sampling failed");
}

}  // namespace

SyntheticDataset generate_dataset(const DatasetSpec& spec) {
  if (spec.classes < 2) throw ConfigError("generate_dataset: need >= 2 classes");
  if (spec.per_class < 1) throw ConfigError("generate_dataset: need >= 1 sample per class");
  if (spec.d_in < 1) throw ConfigError("generate_dataset: d_in must be positive");
  if (spec.d_in < spec.classes) {
    throw ConfigError("generate_dataset: d_in must be >= classes for orthogonal means");
  }
  if (spec.boundary_fraction < 0.0 || spec.boundary_fraction > 1.0) {
    throw ConfigError("generate_dataset: boundary_fraction must be in [0, 1]");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Orthonormalized random directions scaled to a fixed radius. Pairwise
  // mean distance is radius*sqrt(2), comfortably above the noise scale.
  const double mean_radius = 5.0;
  SyntheticDataset ds;
  ds.classes = spec.classes;
  std::vector<Vec> dirs(spec.classes, Vec(spec.d_in));
  for (auto& d : dirs)
    for (double& v : d) v = gauss(rng);
  for (int pass = 0; pass < 2; ++pass) {
    for (int j = 0; j < spec.classes; ++j) {
      for (int k = 0; k < j; ++k) axpy(-dot(dirs[k], dirs[j]), dirs[k], dirs[j]);
      const double nj = norm(dirs[j]);
      if (nj < 1e-12) throw NumericError("generate_dataset: degenerate class directions");
      for (double& v : dirs[j]) v /= nj;
    }
  }
  for (const auto& d : dirs) ds.class_means.push_back(scaled(d, mean_radius));

  const int boundary_per_class =
      static_cast<int>(spec.boundary_fraction * spec.per_class);
  std::uniform_int_distribution<int> other_class(0, spec.classes - 2);

  for (int c = 0; c < spec.classes; ++c) {
    for (int i = 0; i < spec.per_class; ++i) {
      Sample s;
      s.label = c;
      if (i < boundary_per_class) {
        int o = other_class(rng);
        if (o >= c) ++o;
        Vec mid = scaled(add(ds.class_means[c], ds.class_means[o]), 0.5);
        s.x = add(mid, truncated_noise(spec.d_in, 0.5, rng));
        ds.tiers.push_back(DifficultyTier::kBoundary);
      } else {
        s.x = add(ds.class_means[c], truncated_noise(spec.d_in, 1.0, rng));
        ds.tiers.push_back(DifficultyTier::kEasy);
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace frost
