#include "frost/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace frost {

Vec matvec(const Matrix& m, const Vec& v) {
  if (static_cast<int>(v.size()) != m.cols) {
    throw ShapeError("matvec: matrix is " + std::to_string(m.rows) + "x" +
                     std::to_string(m.cols) + ", vector has dim " +
                     std::to_string(v.size()));
  }
  Vec out(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0;
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) s += row[c] * v[c];
    out[r] = s;
  }
  return out;
}

Vec matvec_transpose(const Matrix& m, const Vec& v) {
  if (static_cast<int>(v.size()) != m.rows) {
    throw ShapeError("matvec_transpose: dimension mismatch");
  }
  Vec out(m.cols, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    const double vr = v[r];
    for (int c = 0; c < m.cols; ++c) out[c] += row[c] * vr;
  }
  return out;
}

void add_outer(Matrix& acc, const Vec& u, const Vec& v, double scale) {
  if (static_cast<int>(u.size()) != acc.rows || static_cast<int>(v.size()) != acc.cols) {
    throw ShapeError("add_outer: dimension mismatch");
  }
  for (int r = 0; r < acc.rows; ++r) {
    double* row = acc.data.data() + static_cast<std::size_t>(r) * acc.cols;
    const double ur = scale * u[r];
    for (int c = 0; c < acc.cols; ++c) row[c] += ur * v[c];
  }
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data) s += x * x;
  return std::sqrt(s);
}

AffineGrad zeros_like(const AffineMap& m) {
  AffineGrad g;
  g.d_weight = Matrix(m.weight.rows, m.weight.cols);
  g.d_bias.assign(m.bias.size(), 0.0);
  return g;
}

Vec affine_apply(const AffineMap& m, const Vec& v) {
  Vec out = matvec(m.weight, v);
  if (out.size() != m.bias.size()) throw ShapeError("affine_apply: bias dim mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += m.bias[i];
  return out;
}

Vec affine_vjp(const AffineMap& m, const Vec& v, const Vec& upstream, AffineGrad& grad) {
  if (static_cast<int>(upstream.size()) != m.dim_out()) {
    throw ShapeError("affine_vjp: upstream dim mismatch");
  }
  add_outer(grad.d_weight, upstream, v);
  for (std::size_t i = 0; i < upstream.size(); ++i) grad.d_bias[i] += upstream[i];
  return matvec_transpose(m.weight, upstream);
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "tanh";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation: " + name);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

ActValue activation_apply(Activation kind, const Vec& v) {
  ActValue out;
  out.value.resize(v.size());
  out.deriv.resize(v.size());
  switch (kind) {
    case Activation::kTanh:
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double t = std::tanh(v[i]);
        out.value[i] = t;
        out.deriv[i] = 1.0 - t * t;
      }
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.value[i] = v[i] > 0.0 ? v[i] : 0.0;
        out.deriv[i] = v[i] > 0.0 ? 1.0 : 0.0;
      }
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double s = sigmoid(v[i]);
        out.value[i] = s;
        out.deriv[i] = s * (1.0 - s);
      }
      break;
  }
  return out;
}

MLPGrad zeros_like(const MLPMap& m) {
  MLPGrad g;
  g.layers.reserve(m.layers.size());
  for (const auto& layer : m.layers) g.layers.push_back(zeros_like(layer));
  return g;
}

Vec mlp_apply(const MLPMap& m, const Vec& v) {
  MLPCache scratch;
  return mlp_apply(m, v, scratch);
}

Vec mlp_apply(const MLPMap& m, const Vec& v, MLPCache& cache) {
  if (m.layers.empty()) throw ConfigError("mlp_apply: empty layer list");
  cache.inputs.clear();
  cache.act_derivs.clear();
  Vec cur = v;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    cache.inputs.push_back(cur);
    cur = affine_apply(m.layers[i], cur);
    if (i + 1 < m.layers.size()) {
      ActValue a = activation_apply(m.activation, cur);
      cache.act_derivs.push_back(std::move(a.deriv));
      cur = std::move(a.value);
    }
  }
  return cur;
}

Vec mlp_vjp(const MLPMap& m, const MLPCache& cache, const Vec& upstream, MLPGrad& grad) {
  if (cache.inputs.size() != m.layers.size()) {
    throw ShapeError("mlp_vjp: cache does not match map");
  }
  Vec u = upstream;
  for (std::size_t idx = m.layers.size(); idx-- > 0;) {
    if (idx + 1 < m.layers.size()) {
      const Vec& d = cache.act_derivs[idx];
      for (std::size_t i = 0; i < u.size(); ++i) u[i] *= d[i];
    }
    u = affine_vjp(m.layers[idx], cache.inputs[idx], u, grad.layers[idx]);
  }
  return u;
}

Vec mlp_vjp_input(const MLPMap& m, const MLPCache& cache, const Vec& upstream) {
  Vec u = upstream;
  for (std::size_t idx = m.layers.size(); idx-- > 0;) {
    if (idx + 1 < m.layers.size()) {
      const Vec& d = cache.act_derivs[idx];
      for (std::size_t i = 0; i < u.size(); ++i) u[i] *= d[i];
    }
    u = matvec_transpose(m.layers[idx].weight, u);
  }
  return u;
}

Vec mlp_jvp(const MLPMap& m, const MLPCache& cache, const Vec& tangent) {
  Vec t = tangent;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    t = matvec(m.layers[i].weight, t);
    if (i + 1 < m.layers.size()) {
      const Vec& d = cache.act_derivs[i];
      for (std::size_t j = 0; j < t.size(); ++j) t[j] *= d[j];
    }
  }
  return t;
}

Vec finite_difference_gradient(const std::function<double(const Vec&)>& f,
                               const Vec& theta, double eps) {
  if (eps <= 0.0) throw ConfigError("finite_difference_gradient: eps must be > 0");
  Vec grad(theta.size(), 0.0);
  Vec probe = theta;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    probe[k] = theta[k] + eps;
    const double fp = f(probe);
    probe[k] = theta[k] - eps;
    const double fm = f(probe);
    probe[k] = theta[k];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_difference_gradient: non-finite function value");
    }
    grad[k] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double spectral_norm_estimate(const std::function<Vec(const Vec&)>& apply,
                              const std::function<Vec(const Vec&)>& apply_transpose,
                              int dim_in, int iters, double tol) {
  if (iters < 1) throw ConfigError("spectral_norm_estimate: iters must be >= 1");
  if (dim_in < 1) throw ConfigError("spectral_norm_estimate: dim_in must be >= 1");

  // Fixed start so estimates are reproducible.
  std::mt19937_64 rng(0x5eed5eedULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(dim_in);
  for (double& x : v) x = gauss(rng);
  double nv = norm(v);
  for (double& x : v) x /= nv;

  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vec w = apply(v);
    const double s = norm(w);
    if (!std::isfinite(s)) throw NumericError("spectral_norm_estimate: diverged");
    if (s == 0.0) return 0.0;
    Vec back = apply_transpose(w);
    const double nb = norm(back);
    if (nb == 0.0) return s;
    for (std::size_t i = 0; i < back.size(); ++i) back[i] /= nb;
    v = std::move(back);
    if (it > 0 && std::abs(s - sigma) <= tol * std::max(1.0, s)) {
      return s;
    }
    sigma = s;
  }
  return sigma;
}

double spectral_norm_estimate(const Matrix& m, int iters, double tol) {
  if (m.cols == 0 || m.rows == 0) return 0.0;
  return spectral_norm_estimate(
      [&m](const Vec& v) { return matvec(m, v); },
      [&m](const Vec& v) { return matvec_transpose(m, v); }, m.cols, iters, tol);
}

AffineMap affine_uniform_init(int dim_out, int dim_in, std::mt19937_64& rng) {
  AffineMap m;
  m.weight = Matrix(dim_out, dim_in);
  m.bias.assign(dim_out, 0.0);
  const double a = std::sqrt(6.0 / (dim_in + dim_out));
  std::uniform_real_distribution<double> uni(-a, a);
  for (double& w : m.weight.data) w = uni(rng);
  return m;
}

}  // namespace frost
