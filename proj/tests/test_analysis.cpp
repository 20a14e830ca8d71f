#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "frost/analysis.hpp"
#include "oracles.hpp"

using namespace frost;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Trajectory fake_trajectory(std::vector<Vec> states) {
  Trajectory traj;
  traj.states = std::move(states);
  traj.outputs.resize(traj.states.size() - 1);
  return traj;
}

OperatorSet scalar_linear(double a, double lambda) {
  OperatorSet ops;
  ops.a.layers.resize(1);
  ops.a.layers[0].weight = Matrix(1, 1);
  ops.a.layers[0].weight.at(0, 0) = a;
  ops.a.layers[0].bias = {0.0};
  ops.b.weight = Matrix(1, 1);
  ops.b.weight.at(0, 0) = 1.0;
  ops.b.bias = {0.0};
  ops.c.weight = Matrix(1, 1);
  ops.c.bias = {0.0};
  ops.d.weight = Matrix(1, 1);
  ops.d.bias = {0.0};
  ops.scale.rho = std::log(lambda);
  ops.scale.hurst = 1.0;
  return ops;
}

Model scalar_model(double a, double lambda) {
  Model m;
  m.kind = ModelKind::kFrost;
  m.dims = Dims{1, 1, 1};
  m.t_max = 16;
  m.ops.push_back(scalar_linear(a, lambda));
  return m;
}

}  // namespace

TEST_CASE("cosine_profile closed forms") {
  SUBCASE("states equal to the final one give a flat profile of ones") {
    const Vec h{1.0, 2.0, 3.0};
    auto profile = cosine_profile({fake_trajectory({h, h, h, h})});
    for (double m : profile.mean) CHECK(m == doctest::Approx(1.0).epsilon(1e-15));
    for (double s : profile.stddev) CHECK(s == doctest::Approx(0.0));
    CHECK(profile.excluded == 0);
  }

  SUBCASE("orthogonal intermediate state scores zero") {
    auto profile = cosine_profile(
        {fake_trajectory({{0.0, 0.0}, {1.0, 0.0}, {0.0, 5.0}})});
    CHECK(profile.mean[0] == doctest::Approx(0.0));
    CHECK(profile.mean[1] == doctest::Approx(1.0));
  }

  SUBCASE("zero-norm states are excluded and counted") {
    auto profile = cosine_profile(
        {fake_trajectory({{0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}})});
    CHECK(profile.excluded == 1);
  }

  SUBCASE("random trajectories match the brute-force cosine oracle") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Vec> states(5, Vec(8));
    for (auto& h : states)
      for (double& v : h) v = gauss(rng);
    auto profile = cosine_profile({fake_trajectory(states)});
    for (int t = 1; t <= 4; ++t) {
      CHECK(profile.mean[t - 1] ==
            doctest::Approx(oracles::brute_cosine(states[t], states[4])).epsilon(1e-12));
    }
    // The profile at t = T is identically one for nonzero final states.
    CHECK(profile.mean.back() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("box_counting_dimension on analytic fixtures") {
  SUBCASE("straight segment") {
    auto est = box_counting_dimension(segment_points(10000));
    CHECK(std::abs(est.dimension - 1.0) <= 0.05);
  }

  SUBCASE("Koch curve vertices at seven construction iterations") {
    const auto pts = koch_curve_points(7);
    CHECK(pts.size() == (1 << 14) + 1);  // 4^7 segments + 1
    auto est = box_counting_dimension(pts);
    const double analytic = std::log(4.0) / std::log(3.0);
    CHECK(std::abs(est.dimension - analytic) <= 0.05);
  }

  SUBCASE("filled grid") {
    auto est = box_counting_dimension(grid_points(100));
    CHECK(std::abs(est.dimension - 2.0) <= 0.05);
  }

  SUBCASE("invariant to rigid translation and uniform rescaling") {
    const auto base = koch_curve_points(6);
    auto moved = base;
    for (auto& p : moved) {
      p[0] = 3.7 * p[0] + 11.0;
      p[1] = 3.7 * p[1] - 4.0;
    }
    const double d0 = box_counting_dimension(base).dimension;
    const double d1 = box_counting_dimension(moved).dimension;
    CHECK(std::abs(d0 - d1) <= 0.02);
  }

  SUBCASE("degenerate cloud reports dimension zero") {
    std::vector<Point2> same(200, {1.5, -2.0});
    auto est = box_counting_dimension(same);
    CHECK(est.degenerate);
    CHECK(est.dimension == 0.0);
  }

  SUBCASE("preconditions") {
    CHECK_THROWS_AS(box_counting_dimension(std::vector<Point2>(50, {0.0, 0.0})),
                    ConfigError);
    CHECK_THROWS_AS(box_counting_dimension(segment_points(200), 3), ConfigError);
  }
}

TEST_CASE("contraction_factor_estimate") {
  SUBCASE("lambda = 0 gives the identity Jacobian") {
    Model m = scalar_model(0.5, 0.5);
    m.ops[0].scale.rho = kNegInf;
    CHECK(contraction_factor_estimate(m, {{0.3}}, {0.0}) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("1-D linear step has Jacobian |1 + lambda a|") {
    const double a = -0.6, lambda = 0.5;
    Model m = scalar_model(a, lambda);
    CHECK(contraction_factor_estimate(m, {{0.2}, {1.0}}, {0.0}) ==
          doctest::Approx(std::abs(1.0 + lambda * a)).epsilon(1e-12));
  }

  SUBCASE("matches a dense Jacobian SVD oracle") {
    Model m = make_model(ModelKind::kFrost, Dims{4, 12, 3}, 8, 19);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec h(12), x(4);
    for (double& v : h) v = gauss(rng);
    for (double& v : x) v = gauss(rng);

    StepLinearization lin(m, h, x, 0);
    Matrix dense(12, 12);
    for (int j = 0; j < 12; ++j) {
      Vec e(12, 0.0);
      e[j] = 1.0;
      const Vec col = lin.apply(e);
      for (int i = 0; i < 12; ++i) dense.at(i, j) = col[i];
    }
    const double oracle = oracles::jacobi_spectral_norm(dense);
    const double est = contraction_factor_estimate(m, {h}, x);
    CHECK(std::abs(est - oracle) < 1e-6);
  }
}

TEST_CASE("error_decay_check") {
  SUBCASE("lambda = 0: already at the fixed point, bound trivially 0 <= 0") {
    Model m = scalar_model(0.5, 0.5);
    m.ops[0].scale.rho = kNegInf;
    auto report = error_decay_check(m, {1.0}, 8);
    CHECK(report.applicable);
    CHECK(report.violations == 0);
    for (double e : report.errors) CHECK(e == 0.0);
  }

  SUBCASE("1-D linear system decays geometrically within the bound") {
    const double a = -0.8, lambda = 0.5;
    Model m = scalar_model(a, lambda);
    auto report = error_decay_check(m, {2.0}, 16);
    REQUIRE(report.applicable);
    CHECK(report.contraction == doctest::Approx(0.6).epsilon(1e-10));
    CHECK(report.violations == 0);
    CHECK(report.tightest_ratio <= 1.0 + 1e-9);
    CHECK(report.tightest_ratio > 0.0);
  }

  SUBCASE("random contractive instances never violate the bound") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Model m = make_model(ModelKind::kFrost, Dims{6, 12, 3}, 8, 400 + seed);
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> gauss(0.0, 1.5);
      Vec x(6);
      for (double& v : x) v = gauss(rng);
      auto report = error_decay_check(m, x, 16);
      REQUIRE(report.applicable);
      CHECK(report.contraction < 1.0);
      CHECK(report.violations == 0);
    }
  }
}

TEST_CASE("gradient_bound_check") {
  SUBCASE("t = 0 norm is exactly one") {
    Model m = scalar_model(-0.5, 0.5);
    auto report = gradient_bound_check(m, {1.0}, 4);
    REQUIRE(report.applicable);
    CHECK(report.norms[0] == 1.0);
  }

  SUBCASE("1-D linear composition is |1 + lambda a|^t") {
    const double a = -0.6, lambda = 0.5;
    Model m = scalar_model(a, lambda);
    auto report = gradient_bound_check(m, {0.5}, 10);
    REQUIRE(report.applicable);
    const double factor = std::abs(1.0 + lambda * a);
    for (int t = 0; t <= 10; ++t) {
      CHECK(report.norms[t] == doctest::Approx(std::pow(factor, t)).epsilon(1e-9));
    }
    CHECK(report.violations == 0);
  }

  SUBCASE("random contractive instances stay within L^t") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Model m = make_model(ModelKind::kFrost, Dims{6, 12, 3}, 8, 500 + seed);
      std::mt19937_64 rng(seed + 9);
      std::normal_distribution<double> gauss(0.0, 1.5);
      Vec x(6);
      for (double& v : x) v = gauss(rng);
      auto report = gradient_bound_check(m, x, 16);
      REQUIRE(report.applicable);
      CHECK(report.violations == 0);
    }
  }
}

TEST_CASE("scaling equivariance identities hold to 1e-12") {
  Model m = make_model(ModelKind::kFrost, Dims{5, 9, 3}, 4, 23);
  auto report = scaling_equivariance_check(m.ops.front(), 25);
  CHECK(report.max_transition_dev <= 1e-12);
  CHECK(report.max_input_dev <= 1e-12);
  CHECK(report.max_readout_dev <= 1e-12);
  CHECK(report.max_feedthrough_dev <= 1e-12);
  CHECK(report.pass());
}

TEST_CASE("gradient_conflict") {
  Model m = make_model(ModelKind::kFrost, Dims{3, 5, 2}, 3, 29);
  HaltingHead head;
  head.w_s.assign(5, 0.2);
  head.b_s = 0.1;

  ModelGrad g1 = zeros_like_grad(m, head);
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double* p : gradient_pointers(m, g1)) *p = gauss(rng);

  SUBCASE("identical bundles give cosine 1, negated give -1") {
    ModelGrad g2 = g1;
    CHECK(gradient_conflict(m, g1, g2) == doctest::Approx(1.0).epsilon(1e-12));
    for (double* p : gradient_pointers(m, g2)) *p = -*p;
    CHECK(gradient_conflict(m, g1, g2) == doctest::Approx(-1.0).epsilon(1e-12));
  }

  SUBCASE("matches a flatten-and-dot oracle on random bundles") {
    ModelGrad g2 = zeros_like_grad(m, head);
    for (double* p : gradient_pointers(m, g2)) *p = gauss(rng);
    const Vec a = flatten_gradient(m, g1);
    const Vec b = flatten_gradient(m, g2);
    const double oracle = dot(a, b) / (norm(a) * norm(b));
    CHECK(gradient_conflict(m, g1, g2) == doctest::Approx(oracle).epsilon(1e-12));
  }

  SUBCASE("zero bundle is flagged and scores 0") {
    ModelGrad zero = zeros_like_grad(m, head);
    bool degenerate = false;
    CHECK(gradient_conflict(m, g1, zero, &degenerate) == 0.0);
    CHECK(degenerate);
  }
}

TEST_CASE("project_to_plane preserves planar structure") {
  // A line embedded in R^6 must project to a (box-counting) 1-D set.
  std::mt19937_64 rng(37);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec dir(6), offset(6);
  for (double& v : dir) v = gauss(rng);
  for (double& v : offset) v = gauss(rng);

  std::vector<Vec> cloud;
  for (int i = 0; i < 2000; ++i) {
    Vec p = offset;
    axpy(i / 2000.0, dir, p);
    cloud.push_back(p);
  }
  const auto plane = project_to_plane(cloud);
  auto est = box_counting_dimension(plane);
  CHECK(std::abs(est.dimension - 1.0) <= 0.05);
}
