#include "frost/sketch.hpp"

#include <algorithm>
#include <cmath>

namespace frost {

KllSketch::KllSketch(int k, std::uint64_t seed) : k_(k), seed_(seed) {
  if (k < 8) throw ConfigError("KllSketch: k must be >= 8");
  compactors_.emplace_back();
}

int KllSketch::capacity(int level) const {
  const int height = num_levels();
  const double c = 2.0 / 3.0;
  const double cap = k_ * std::pow(c, height - 1 - level);
  return std::max(2, static_cast<int>(std::ceil(cap)));
}

bool KllSketch::coin_flip() {
  return (splitmix64(seed_ ^ coin_counter_++) & 1ULL) != 0;
}

void KllSketch::insert(double v) {
  if (!std::isfinite(v)) throw NumericError("KllSketch::insert: non-finite value");
  compactors_[0].push_back(v);
  ++n_;
  compress();
}

void KllSketch::compress() {
  for (int level = 0; level < num_levels(); ++level) {
    if (static_cast<int>(compactors_[level].size()) < capacity(level)) continue;
    if (level + 1 == num_levels()) compactors_.emplace_back();

    auto& buf = compactors_[level];  // taken after any reallocation above
    std::sort(buf.begin(), buf.end());
    const std::size_t even = buf.size() - (buf.size() % 2);
    const std::size_t offset = coin_flip() ? 1 : 0;
    auto& up = compactors_[level + 1];
    for (std::size_t i = offset; i < even; i += 2) up.push_back(buf[i]);
    // An odd leftover stays at this level.
    if (even < buf.size()) {
      buf[0] = buf.back();
      buf.resize(1);
    } else {
      buf.clear();
    }
    // Growing the stack changes every level's capacity; restart the scan.
    level = -1;
  }
}

std::size_t KllSketch::stored_items() const {
  std::size_t total = 0;
  for (const auto& buf : compactors_) total += buf.size();
  return total;
}

std::uint64_t KllSketch::weighted_count() const {
  std::uint64_t total = 0;
  for (int level = 0; level < num_levels(); ++level) {
    total += static_cast<std::uint64_t>(compactors_[level].size()) << level;
  }
  return total;
}

double KllSketch::query(double q) const {
  if (empty()) throw ConfigError("KllSketch::query: empty sketch");
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("KllSketch::query: q must be in (0, 1]");

  struct Item {
    double value;
    std::uint64_t weight;
  };
  std::vector<Item> items;
  items.reserve(stored_items());
  for (int level = 0; level < num_levels(); ++level) {
    const std::uint64_t w = 1ULL << level;
    for (double v : compactors_[level]) items.push_back({v, w});
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.value < b.value; });

  const double target = q * static_cast<double>(n_);
  double cum = 0.0;
  double prev_value = items.front().value;
  double prev_cum = 0.0;
  for (const Item& it : items) {
    cum += static_cast<double>(it.weight);
    if (cum >= target) {
      if (cum == target || prev_cum == 0.0) return it.value;
      // Interpolate by weighted rank between the previous item's right
      // edge and this item's right edge.
      const double f = (target - prev_cum) / (cum - prev_cum);
      return prev_value + f * (it.value - prev_value);
    }
    prev_value = it.value;
    prev_cum = cum;
  }
  return items.back().value;
}

KllSketch KllSketch::merge(const KllSketch& a, const KllSketch& b) {
  if (a.k_ != b.k_) throw ConfigError("KllSketch::merge: mismatched k");
  KllSketch out = a;
  if (b.num_levels() > out.num_levels()) out.compactors_.resize(b.num_levels());
  for (int level = 0; level < b.num_levels(); ++level) {
    out.compactors_[level].insert(out.compactors_[level].end(),
                                  b.compactors_[level].begin(),
                                  b.compactors_[level].end());
  }
  out.n_ += b.n_;
  out.compress();
  return out;
}

void KllSketch::clear() {
  compactors_.clear();
  compactors_.emplace_back();
  n_ = 0;
  coin_counter_ = 0;
}

KllSketch KllSketch::restore(int k, std::uint64_t seed, std::uint64_t coin_counter,
                             std::uint64_t n, std::vector<std::vector<double>> compactors) {
  KllSketch s(k, seed);
  if (compactors.empty()) compactors.emplace_back();
  s.compactors_ = std::move(compactors);
  s.coin_counter_ = coin_counter;
  s.n_ = n;
  if (s.weighted_count() != n) {
    throw ConfigError("KllSketch::restore: weighted count does not match n");
  }
  return s;
}

}  // namespace frost
