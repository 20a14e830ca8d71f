#include "frost/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

namespace frost {

ConsistencyProfile cosine_profile(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw ConfigError("cosine_profile: no trajectories");
  const int steps = trajectories.front().steps();
  for (const auto& traj : trajectories) {
    if (traj.steps() != steps) {
      throw ShapeError("cosine_profile: trajectories have differing depths");
    }
  }

  ConsistencyProfile profile;
  profile.steps = steps;
  profile.mean.assign(steps, 0.0);
  profile.stddev.assign(steps, 0.0);
  std::vector<int> counts(steps, 0);
  std::vector<double> sq(steps, 0.0);

  for (const auto& traj : trajectories) {
    const Vec& h_final = traj.states.back();
    const double n_final = norm(h_final);
    if (n_final == 0.0) {
      profile.excluded += steps;
      continue;
    }
    for (int t = 1; t <= steps; ++t) {
      const Vec& h_t = traj.states[t];
      const double n_t = norm(h_t);
      if (n_t == 0.0) {
        ++profile.excluded;
        continue;
      }
      const double c = dot(h_t, h_final) / (n_t * n_final);
      profile.mean[t - 1] += c;
      sq[t - 1] += c * c;
      ++counts[t - 1];
    }
  }
  for (int t = 0; t < steps; ++t) {
    if (counts[t] == 0) continue;
    profile.mean[t] /= counts[t];
    const double var = std::max(0.0, sq[t] / counts[t] - profile.mean[t] * profile.mean[t]);
    profile.stddev[t] = std::sqrt(var);
  }
  return profile;
}

DimensionEstimate box_counting_dimension(const std::vector<Point2>& points,
                                         int scale_levels) {
  if (points.size() < 100) {
    throw ConfigError("box_counting_dimension: need >= 100 points");
  }
  if (scale_levels < 4) {
    throw ConfigError("box_counting_dimension: need >= 4 scale levels");
  }

  double min_x = points[0][0], max_x = points[0][0];
  double min_y = points[0][1], max_y = points[0][1];
  for (const auto& p : points) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  const double extent = std::max(max_x - min_x, max_y - min_y);

  DimensionEstimate est;
  if (extent <= 0.0) {
    est.degenerate = true;
    est.dimension = 0.0;
    return est;
  }

  // Uniform normalization to the unit square preserves the aspect ratio,
  // which is what makes the estimate rigid-motion and scale invariant.
  std::vector<long> counts;
  std::vector<double> scales;
  for (int level = 1; level <= scale_levels; ++level) {
    const double eps = std::pow(0.5, level);
    const long cells = 1L << level;
    std::unordered_set<long long> occupied;
    for (const auto& p : points) {
      long ix = static_cast<long>((p[0] - min_x) / extent / eps);
      long iy = static_cast<long>((p[1] - min_y) / extent / eps);
      ix = std::min(ix, cells - 1);
      iy = std::min(iy, cells - 1);
      occupied.insert(static_cast<long long>(ix) * (cells + 1) + iy);
    }
    counts.push_back(static_cast<long>(occupied.size()));
    scales.push_back(eps);
  }

  // Drop saturated fine levels: once boxes approach one point each the
  // log-log curve flattens and biases the slope down.
  const long saturation = static_cast<long>(points.size()) / 2;
  while (counts.size() > 4 && counts.back() > saturation) {
    counts.pop_back();
    scales.pop_back();
  }

  const std::size_t m = counts.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double xi = std::log(1.0 / scales[i]);
    const double yi = std::log(static_cast<double>(std::max(counts[i], 1L)));
    sx += xi;
    sy += yi;
    sxx += xi * xi;
    sxy += xi * yi;
  }
  const double denom = m * sxx - sx * sx;
  est.dimension = (m * sxy - sx * sy) / denom;
  const double intercept = (sy - est.dimension * sx) / m;

  double res_sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double xi = std::log(1.0 / scales[i]);
    const double yi = std::log(static_cast<double>(std::max(counts[i], 1L)));
    const double r = yi - (est.dimension * xi + intercept);
    res_sq += r * r;
  }
  est.fit_residual = std::sqrt(res_sq / m);
  est.scales = std::move(scales);
  est.box_counts = std::move(counts);
  return est;
}

double contraction_factor_estimate(const Model& model, const std::vector<Vec>& probes,
                                   const Vec& x) {
  if (probes.empty()) throw ConfigError("contraction_factor_estimate: no probes");
  double worst = 0.0;
  for (const Vec& h : probes) {
    StepLinearization lin(model, h, x, 0);
    const double l = spectral_norm_estimate(
        [&lin](const Vec& v) { return lin.apply(v); },
        [&lin](const Vec& v) { return lin.apply_transpose(v); }, lin.dim(), 400, 1e-13);
    if (!std::isfinite(l)) {
      throw NumericError("contraction_factor_estimate: power iteration diverged");
    }
    worst = std::max(worst, l);
  }
  return worst;
}

namespace {

// Iterates the step map to numerical convergence. Returns false when the
// increment fails to drop below the threshold.
bool iterate_to_fixed_point(const Model& model, const Vec& x, Vec& h_star,
                            double* final_gap, int max_iters = 200000) {
  Vec h(model.dims.d_hid, 0.0);
  double gap = 0.0;
  for (int i = 0; i < max_iters; ++i) {
    Vec next = model_step(model, h, x, 0);
    if (!all_finite(next)) return false;
    gap = norm(sub(next, h));
    h = std::move(next);
    if (gap < 1e-12) {
      h_star = h;
      if (final_gap) *final_gap = gap;
      return true;
    }
  }
  return false;
}

}  // namespace

ErrorDecayReport error_decay_check(const Model& model, const Vec& x, int steps,
                                   double tol) {
  ErrorDecayReport report;
  Trajectory traj = unroll(model, x, steps);

  // Already at a fixed point (e.g. lambda = 0): every error and every
  // bound is exactly zero, no contraction estimate needed.
  if (norm(sub(traj.states[1], traj.states[0])) == 0.0) {
    report.applicable = true;
    report.contraction = 0.0;
    for (int t = 0; t <= steps; ++t) {
      const double err = norm(sub(traj.states[t], traj.states[0]));
      report.errors.push_back(err);
      report.bounds.push_back(0.0);
      if (err > 0.0) ++report.violations;
    }
    return report;
  }

  Vec h_star;
  if (!iterate_to_fixed_point(model, x, h_star, &report.fixed_point_gap)) {
    report.applicable = false;
    return report;
  }

  // Probe set: the iterates themselves, interpolants along consecutive
  // segments, the fixed point, and a few points between iterates and h*.
  std::vector<Vec> probes = traj.states;
  probes.push_back(h_star);
  for (int t = 0; t + 1 <= steps; ++t) {
    for (double f : {0.25, 0.5, 0.75}) {
      Vec p = traj.states[t];
      axpy(f, sub(traj.states[t + 1], traj.states[t]), p);
      probes.push_back(p);
    }
    Vec q = traj.states[t];
    axpy(0.5, sub(h_star, traj.states[t]), q);
    probes.push_back(q);
  }
  const double contraction = contraction_factor_estimate(model, probes, x);
  report.contraction = contraction;
  if (contraction >= 1.0) {
    report.applicable = false;
    return report;
  }
  report.applicable = true;

  const double first_gap = norm(sub(traj.states[1], traj.states[0]));
  for (int t = 0; t <= steps; ++t) {
    const double err = norm(sub(traj.states[t], h_star));
    const double bound = std::pow(contraction, t) / (1.0 - contraction) * first_gap;
    report.errors.push_back(err);
    report.bounds.push_back(bound);
    if (err > bound * (1.0 + tol)) ++report.violations;
    if (bound > 0.0) report.tightest_ratio = std::max(report.tightest_ratio, err / bound);
  }
  return report;
}

GradientBoundReport gradient_bound_check(const Model& model, const Vec& x, int steps,
                                         double tol) {
  GradientBoundReport report;
  Trajectory traj = unroll(model, x, steps);

  std::vector<Vec> probes(traj.states.begin(), traj.states.end() - 1);
  const double contraction = contraction_factor_estimate(model, probes, x);
  report.contraction = contraction;
  if (contraction >= 1.0) {
    report.applicable = false;
    return report;
  }
  report.applicable = true;

  std::vector<StepLinearization> lins;
  lins.reserve(steps);
  for (int t = 1; t <= steps; ++t) {
    lins.emplace_back(model, traj.states[t - 1], x, t - 1);
  }

  report.norms.push_back(1.0);  // t = 0: identity
  report.bounds.push_back(1.0 + tol);
  for (int t = 1; t <= steps; ++t) {
    const double n = spectral_norm_estimate(
        [&lins, t](const Vec& v) {
          Vec cur = v;
          for (int k = 0; k < t; ++k) cur = lins[k].apply(cur);
          return cur;
        },
        [&lins, t](const Vec& v) {
          Vec cur = v;
          for (int k = t; k-- > 0;) cur = lins[k].apply_transpose(cur);
          return cur;
        },
        model.dims.d_hid, 400, 1e-13);
    const double bound = std::pow(contraction, t) + tol;
    report.norms.push_back(n);
    report.bounds.push_back(bound);
    if (n > bound) ++report.violations;
  }
  return report;
}

bool ScalingCheckReport::pass(double tol) const {
  return max_transition_dev <= tol && max_input_dev <= tol &&
         max_readout_dev <= tol && max_feedthrough_dev <= tol;
}

namespace {

double max_abs_diff(const Vec& a, const Vec& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

}  // namespace

ScalingCheckReport scaling_equivariance_check(const OperatorSet& ops, int trials,
                                              std::uint64_t seed) {
  const double lambdas[] = {0.25, 0.5, 1.0, 2.0};
  const double hursts[] = {0.2, 0.5, 0.8, 1.0};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ScalingCheckReport report;
  for (int trial = 0; trial < trials; ++trial) {
    Vec h(ops.a.dim_in()), x(ops.b.dim_in());
    for (double& v : h) v = gauss(rng);
    for (double& v : x) v = gauss(rng);

    const Vec a_base = mlp_apply(ops.a, h);
    const Vec b_base = affine_apply(ops.b, x);
    const Vec c_base = affine_apply(ops.c, h);
    const Vec d_base = affine_apply(ops.d, x);

    for (double lam : lambdas) {
      for (double hurst : hursts) {
        OperatorSet scaled_ops = ops;
        scaled_ops.scale.rho = std::log(lam);
        scaled_ops.scale.hurst = hurst;

        report.max_transition_dev = std::max(
            report.max_transition_dev,
            max_abs_diff(scaled_transition(scaled_ops, h), scaled(a_base, lam)));
        report.max_input_dev = std::max(
            report.max_input_dev,
            max_abs_diff(scaled_input(scaled_ops, x),
                         scaled(b_base, std::pow(lam, 1.0 + hurst))));
        // C path: readout minus the feedthrough must equal lam^{-H} C(h).
        const Vec y = readout(scaled_ops, h, x);
        report.max_readout_dev =
            std::max(report.max_readout_dev,
                     max_abs_diff(sub(y, d_base), scaled(c_base, std::pow(lam, -hurst))));

        // Feedthrough invariance: with C zeroed the readout must not
        // depend on lambda.
        OperatorSet no_c = scaled_ops;
        for (double& w : no_c.c.weight.data) w = 0.0;
        for (double& b : no_c.c.bias) b = 0.0;
        report.max_feedthrough_dev = std::max(
            report.max_feedthrough_dev, max_abs_diff(readout(no_c, h, x), d_base));
      }
    }
  }
  return report;
}

double gradient_conflict(const Model& model, const ModelGrad& grad_task,
                         const ModelGrad& grad_rank, bool* degenerate) {
  const Vec a = flatten_gradient(model, grad_task);
  const Vec b = flatten_gradient(model, grad_rank);
  if (a.size() != b.size()) throw ShapeError("gradient_conflict: bundle size mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (degenerate) *degenerate = (na == 0.0 || nb == 0.0);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

std::vector<Point2> koch_curve_points(int iterations) {
  if (iterations < 0) throw ConfigError("koch_curve_points: iterations must be >= 0");
  // Vertex set of the iterated curve on the unit base segment.
  std::vector<Point2> pts = {{0.0, 0.0}, {1.0, 0.0}};
  const double s = std::sqrt(3.0) / 6.0;  // height of the bump over a unit edge
  for (int it = 0; it < iterations; ++it) {
    std::vector<Point2> next;
    next.reserve((pts.size() - 1) * 4 + 1);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const double ax = pts[i][0], ay = pts[i][1];
      const double bx = pts[i + 1][0], by = pts[i + 1][1];
      const double dx = bx - ax, dy = by - ay;
      next.push_back(pts[i]);
      next.push_back({ax + dx / 3.0, ay + dy / 3.0});
      // Peak of the equilateral bump on the middle third.
      next.push_back({ax + dx / 2.0 - dy * s, ay + dy / 2.0 + dx * s});
      next.push_back({ax + 2.0 * dx / 3.0, ay + 2.0 * dy / 3.0});
    }
    next.push_back(pts.back());
    pts = std::move(next);
  }
  return pts;
}

std::vector<Point2> segment_points(int count) {
  std::vector<Point2> pts;
  pts.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double f = static_cast<double>(i) / (count - 1);
    pts.push_back({f, 0.3 * f});
  }
  return pts;
}

std::vector<Point2> grid_points(int per_side) {
  std::vector<Point2> pts;
  pts.reserve(static_cast<std::size_t>(per_side) * per_side);
  for (int i = 0; i < per_side; ++i) {
    for (int j = 0; j < per_side; ++j) {
      pts.push_back({static_cast<double>(i) / (per_side - 1),
                     static_cast<double>(j) / (per_side - 1)});
    }
  }
  return pts;
}

std::vector<Point2> project_to_plane(const std::vector<Vec>& points) {
  if (points.empty()) throw ConfigError("project_to_plane: empty cloud");
  const std::size_t dim = points.front().size();
  if (dim < 2) throw ConfigError("project_to_plane: need dimension >= 2");

  Vec mean(dim, 0.0);
  for (const auto& p : points) axpy(1.0, p, mean);
  for (double& v : mean) v /= static_cast<double>(points.size());

  Matrix cov(static_cast<int>(dim), static_cast<int>(dim));
  for (const auto& p : points) {
    Vec centered = sub(p, mean);
    add_outer(cov, centered, centered, 1.0 / static_cast<double>(points.size()));
  }

  // Top two eigenvectors by power iteration with deflation; cov is
  // symmetric PSD so the singular vectors coincide with eigenvectors.
  auto top_eigvec = [&dim](const Matrix& m) {
    std::mt19937_64 rng(0x9d2c5680ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(dim);
    for (double& x : v) x = gauss(rng);
    double nv = norm(v);
    for (double& x : v) x /= nv;
    for (int it = 0; it < 500; ++it) {
      Vec w = matvec(m, v);
      const double nw = norm(w);
      if (nw == 0.0) return std::pair<Vec, double>(v, 0.0);
      for (double& x : w) x /= nw;
      v = std::move(w);
    }
    const double eig = dot(v, matvec(m, v));
    return std::pair<Vec, double>(v, eig);
  };

  auto [v1, e1] = top_eigvec(cov);
  Matrix deflated = cov;
  add_outer(deflated, v1, v1, -e1);
  auto [v2, e2] = top_eigvec(deflated);
  (void)e2;

  std::vector<Point2> plane;
  plane.reserve(points.size());
  for (const auto& p : points) {
    Vec centered = sub(p, mean);
    plane.push_back({dot(centered, v1), dot(centered, v2)});
  }
  return plane;
}

}  // namespace frost
