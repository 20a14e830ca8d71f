#pragma once

#include <functional>
#include <random>

#include "frost/common.hpp"

namespace frost {

// Row-major dense matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }
};

Vec matvec(const Matrix& m, const Vec& v);
Vec matvec_transpose(const Matrix& m, const Vec& v);
// acc += u * v^T
void add_outer(Matrix& acc, const Vec& u, const Vec& v, double scale = 1.0);
double frobenius_norm(const Matrix& m);

// y = weight * v + bias
struct AffineMap {
  Matrix weight;
  Vec bias;

  int dim_in() const { return weight.cols; }
  int dim_out() const { return weight.rows; }
};

struct AffineGrad {
  Matrix d_weight;
  Vec d_bias;
};

AffineGrad zeros_like(const AffineMap& m);
Vec affine_apply(const AffineMap& m, const Vec& v);
// Accumulates parameter gradients into `grad`, returns dL/dv.
Vec affine_vjp(const AffineMap& m, const Vec& v, const Vec& upstream, AffineGrad& grad);

enum class Activation { kTanh, kRelu, kSigmoid };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct ActValue {
  Vec value;
  Vec deriv;  // elementwise derivative, |deriv| <= 1 for all three kinds
};

ActValue activation_apply(Activation kind, const Vec& v);

double sigmoid(double z);

// Feed-forward chain of affine layers with the activation applied between
// layers (after every layer except the last). A single-layer MLPMap is a
// plain affine map.
struct MLPMap {
  std::vector<AffineMap> layers;
  Activation activation = Activation::kTanh;

  int dim_in() const { return layers.front().dim_in(); }
  int dim_out() const { return layers.back().dim_out(); }
};

struct MLPGrad {
  std::vector<AffineGrad> layers;
};

// Forward intermediates needed by mlp_vjp / mlp_jvp.
struct MLPCache {
  std::vector<Vec> inputs;      // input to each layer
  std::vector<Vec> act_derivs;  // activation derivative after layer i (i < L-1)
};

MLPGrad zeros_like(const MLPMap& m);
Vec mlp_apply(const MLPMap& m, const Vec& v);
Vec mlp_apply(const MLPMap& m, const Vec& v, MLPCache& cache);
// Accumulates parameter gradients, returns dL/dv. Cache must come from
// mlp_apply at the same point.
Vec mlp_vjp(const MLPMap& m, const MLPCache& cache, const Vec& upstream, MLPGrad& grad);
// J^T * upstream only, no parameter gradients.
Vec mlp_vjp_input(const MLPMap& m, const MLPCache& cache, const Vec& upstream);
// Directional derivative J*t at the cached point.
Vec mlp_jvp(const MLPMap& m, const MLPCache& cache, const Vec& tangent);

// Central differences (f(x+eps e_k) - f(x-eps e_k)) / 2eps per coordinate.
Vec finite_difference_gradient(const std::function<double(const Vec&)>& f,
                               const Vec& theta, double eps);

// Largest singular value by power iteration on M^T M. Starts from a fixed
// seeded random vector; stops after `iters` rounds or when the relative
// change drops below `tol`. A zero map yields 0.
double spectral_norm_estimate(const std::function<Vec(const Vec&)>& apply,
                              const std::function<Vec(const Vec&)>& apply_transpose,
                              int dim_in, int iters = 200, double tol = 1e-12);
double spectral_norm_estimate(const Matrix& m, int iters = 200, double tol = 1e-12);

// Uniform[-a, a] with a = sqrt(6 / (dim_in + dim_out)).
AffineMap affine_uniform_init(int dim_out, int dim_in, std::mt19937_64& rng);

}  // namespace frost
