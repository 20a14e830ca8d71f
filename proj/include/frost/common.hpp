#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace frost {

// Dense real vector. All core computation is double precision.
using Vec = std::vector<double>;

// Inconsistent dimensions between operands.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration, empty containers, out-of-range knobs.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values, divergence, failed numeric procedures.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void require_dim(const Vec& v, std::size_t dim, const char* what) {
  if (v.size() != dim) {
    throw ShapeError(std::string(what) + ": expected dim " +
                     std::to_string(dim) + ", got " + std::to_string(v.size()));
  }
}

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw ShapeError("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(const Vec& v, double alpha) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = alpha * v[i];
  return out;
}

inline Vec add(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("add: dimension mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec sub(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("sub: dimension mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// SplitMix64: counter-based generator used where reproducibility must not
// depend on how many draws other components consumed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace frost
