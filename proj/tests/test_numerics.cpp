#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "frost/numerics.hpp"
#include "oracles.hpp"

using namespace frost;

namespace {

Matrix matrix_from(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (double v : row) m.at(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST_CASE("affine_apply basics") {
  AffineMap identity{Matrix::identity(2), {0.0, 0.0}};
  CHECK(affine_apply(identity, {1.0, 2.0}) == Vec{1.0, 2.0});

  AffineMap constant{Matrix(1, 2), {3.0}};
  CHECK(affine_apply(constant, {5.0, -1.0}) == Vec{3.0});

  AffineMap m{matrix_from({{2.0, 0.0}, {0.0, 3.0}}), {1.0, 1.0}};
  CHECK(affine_apply(m, {1.0, 1.0}) == Vec{3.0, 4.0});

  CHECK_THROWS_AS(affine_apply(m, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("affine_vjp trivial cases") {
  AffineMap m{matrix_from({{1.0, 2.0}, {3.0, 4.0}}), {0.5, -0.5}};

  AffineGrad g = zeros_like(m);
  Vec dv = affine_vjp(m, {1.0, 2.0}, {0.0, 0.0}, g);
  CHECK(dv == Vec{0.0, 0.0});
  for (double w : g.d_weight.data) CHECK(w == 0.0);
  for (double b : g.d_bias) CHECK(b == 0.0);

  AffineMap id{Matrix::identity(2), {0.0, 0.0}};
  AffineGrad gi = zeros_like(id);
  CHECK(affine_vjp(id, {7.0, 8.0}, {1.0, 0.0}, gi) == Vec{1.0, 0.0});
}

TEST_CASE("vjp matches finite differences on random affine and MLP instances") {
  std::mt19937_64 rng(71);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 6);

  double worst = 0.0;
  for (int trial = 0; trial < 120; ++trial) {
    const int d_in = dim(rng), d_hid = dim(rng), d_out = dim(rng);
    MLPMap mlp;
    mlp.activation = trial % 3 == 0   ? Activation::kTanh
                     : trial % 3 == 1 ? Activation::kSigmoid
                                      : Activation::kRelu;
    mlp.layers.push_back(affine_uniform_init(d_hid, d_in, rng));
    if (trial % 2 == 0) mlp.layers.push_back(affine_uniform_init(d_out, d_hid, rng));
    Vec v(d_in), u(static_cast<std::size_t>(mlp.dim_out()));
    for (double& z : v) z = gauss(rng);
    for (double& z : u) z = gauss(rng);

    MLPGrad grad = zeros_like(mlp);
    MLPCache cache;
    mlp_apply(mlp, v, cache);
    Vec d_input = mlp_vjp(mlp, cache, u, grad);

    Vec theta, analytic;
    for (const auto& l : mlp.layers) {
      theta.insert(theta.end(), l.weight.data.begin(), l.weight.data.end());
      theta.insert(theta.end(), l.bias.begin(), l.bias.end());
    }
    // The input acts as one more parameter block.
    theta.insert(theta.end(), v.begin(), v.end());
    for (const auto& l : grad.layers) {
      analytic.insert(analytic.end(), l.d_weight.data.begin(), l.d_weight.data.end());
      analytic.insert(analytic.end(), l.d_bias.begin(), l.d_bias.end());
    }
    analytic.insert(analytic.end(), d_input.begin(), d_input.end());

    auto loss = [&](const Vec& t) {
      MLPMap probe = mlp;
      std::size_t pos = 0;
      for (auto& l : probe.layers) {
        for (double& w : l.weight.data) w = t[pos++];
        for (double& b : l.bias) b = t[pos++];
      }
      Vec vin(t.begin() + pos, t.end());
      return dot(u, mlp_apply(probe, vin));
    };
    const Vec fd = finite_difference_gradient(loss, theta, 1e-6);
    worst = std::max(worst, norm(sub(analytic, fd)) / std::max(norm(fd), 1e-12));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("finite_difference_gradient basics") {
  auto square = [](const Vec& t) { return t[0] * t[0]; };
  CHECK(finite_difference_gradient(square, {1.0}, 1e-4)[0] ==
        doctest::Approx(2.0).epsilon(1e-6));

  auto constant = [](const Vec&) { return 3.5; };
  for (double g : finite_difference_gradient(constant, {1.0, -2.0, 0.3}, 1e-4)) {
    CHECK(g == 0.0);
  }

  auto total = [](const Vec& t) {
    double s = 0.0;
    for (double v : t) s += v;
    return s;
  };
  for (double g : finite_difference_gradient(total, {0.2, 5.0, -1.0}, 1e-5)) {
    CHECK(g == doctest::Approx(1.0).epsilon(1e-8));
  }

  CHECK_THROWS_AS(finite_difference_gradient(square, {1.0}, 0.0), ConfigError);
}

TEST_CASE("spectral_norm_estimate on known matrices") {
  CHECK(spectral_norm_estimate(Matrix::identity(3)) == doctest::Approx(1.0).epsilon(1e-12));

  Matrix diag(2, 2);
  diag.at(0, 0) = 0.5;
  diag.at(1, 1) = 0.2;
  CHECK(spectral_norm_estimate(diag) == doctest::Approx(0.5).epsilon(1e-12));

  CHECK(spectral_norm_estimate(Matrix(3, 3)) == 0.0);
}

TEST_CASE("spectral_norm_estimate matches dense Jacobi oracle") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m(8, 8);
    for (double& w : m.data) w = gauss(rng);
    const double est = spectral_norm_estimate(m, 5000, 1e-15);
    const double oracle = oracles::jacobi_spectral_norm(m);
    CHECK(std::abs(est - oracle) < 1e-6 * std::max(1.0, oracle));
    CHECK(est <= frobenius_norm(m) + 1e-9);
  }
}

TEST_CASE("spectral norm estimates are monotone in the iteration budget") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(10, 10);
  for (double& w : m.data) w = gauss(rng);
  double prev = 0.0;
  for (int iters : {1, 2, 4, 8, 16, 64, 200}) {
    const double est = spectral_norm_estimate(m, iters, 0.0);
    CHECK(est >= prev - 1e-12);
    prev = est;
  }
}

TEST_CASE("activation values, derivatives, and Lipschitz bound") {
  auto sig = activation_apply(Activation::kSigmoid, {0.0});
  CHECK(sig.value[0] == doctest::Approx(0.5));
  CHECK(sig.deriv[0] == doctest::Approx(0.25));

  auto relu = activation_apply(Activation::kRelu, {-1.0});
  CHECK(relu.value[0] == 0.0);
  CHECK(relu.deriv[0] == 0.0);

  std::mt19937_64 rng(23);
  std::normal_distribution<double> gauss(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = gauss(rng);
    const auto t = activation_apply(Activation::kTanh, {x});
    auto f = [](const Vec& v) { return std::tanh(v[0]); };
    CHECK(t.deriv[0] ==
          doctest::Approx(finite_difference_gradient(f, {x}, 1e-5)[0]).epsilon(1e-6));

    const double a = gauss(rng), b = gauss(rng);
    for (Activation k : {Activation::kTanh, Activation::kRelu, Activation::kSigmoid}) {
      const auto va = activation_apply(k, {a});
      const auto vb = activation_apply(k, {b});
      CHECK(std::abs(va.value[0] - vb.value[0]) <=
            std::abs(a - b) * (1.0 + 1e-12) + 1e-15);
      CHECK(std::abs(va.deriv[0]) <= 1.0);
    }
  }
}

TEST_CASE("mlp_jvp matches directional finite differences") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MLPMap mlp;
  mlp.layers.push_back(affine_uniform_init(5, 4, rng));
  mlp.layers.push_back(affine_uniform_init(3, 5, rng));

  Vec v(4), tangent(4);
  for (double& z : v) z = gauss(rng);
  for (double& z : tangent) z = gauss(rng);

  MLPCache cache;
  mlp_apply(mlp, v, cache);
  const Vec jv = mlp_jvp(mlp, cache, tangent);

  const double eps = 1e-6;
  Vec vp = v, vm = v;
  axpy(eps, tangent, vp);
  axpy(-eps, tangent, vm);
  const Vec fd = scaled(sub(mlp_apply(mlp, vp), mlp_apply(mlp, vm)), 0.5 / eps);
  CHECK(norm(sub(jv, fd)) < 1e-5);
}
