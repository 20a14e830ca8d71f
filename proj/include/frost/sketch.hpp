#pragma once

#include <cstdint>

#include "frost/common.hpp"

namespace frost {

// KLL streaming quantile sketch (Karnin-Lang-Liberty). Items at compactor
// level l carry weight 2^l. Level capacities shrink geometrically (ratio
// 2/3) from k at the top level, so the total footprint is O(k log(n/k))
// while rank error stays O(n/k).
//
// Compaction coin flips come from a counter-based generator seeded per
// sketch, so identical (seed, stream) pairs produce identical sketches.
class KllSketch {
 public:
  explicit KllSketch(int k = 200, std::uint64_t seed = 0);

  void insert(double v);

  // Value whose rank in the inserted stream approximates q*n. q in (0, 1];
  // q = 1 returns the maximum retained item. Interpolates between stored
  // items by weighted rank.
  double query(double q) const;

  static KllSketch merge(const KllSketch& a, const KllSketch& b);

  std::uint64_t count() const { return n_; }
  bool empty() const { return n_ == 0; }
  int k() const { return k_; }
  int num_levels() const { return static_cast<int>(compactors_.size()); }
  std::size_t stored_items() const;
  // Sum of 2^level * |level| over all levels; equals count() by invariant.
  std::uint64_t weighted_count() const;

  void clear();

  const std::vector<std::vector<double>>& compactors() const { return compactors_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t coin_counter() const { return coin_counter_; }

  // Used by checkpoint serialization; validates the weighted count.
  static KllSketch restore(int k, std::uint64_t seed, std::uint64_t coin_counter,
                           std::uint64_t n, std::vector<std::vector<double>> compactors);

 private:
  int capacity(int level) const;
  void compress();
  bool coin_flip();

  int k_;
  std::uint64_t seed_;
  std::uint64_t coin_counter_ = 0;
  std::uint64_t n_ = 0;
  std::vector<std::vector<double>> compactors_;
};

}  // namespace frost
