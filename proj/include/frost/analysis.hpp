#pragma once

#include <array>

#include "frost/training.hpp"

namespace frost {

using Point2 = std::array<double, 2>;

// Mean and standard deviation of cos(h_t, h_T) per depth t = 1..T over a
// set of trajectories. Zero-norm states are excluded and counted.
struct ConsistencyProfile {
  std::vector<double> mean;
  std::vector<double> stddev;
  int excluded = 0;
  int steps = 0;
};

ConsistencyProfile cosine_profile(const std::vector<Trajectory>& trajectories);

// Minkowski (box-counting) dimension of a planar point set: least-squares
// slope of log N(eps) against log(1/eps) over a dyadic ladder, after
// normalizing the cloud to the unit square. Finest levels are dropped when
// occupancy saturates (boxes approach one point each).
struct DimensionEstimate {
  double dimension = 0.0;
  std::vector<double> scales;       // eps values actually used in the fit
  std::vector<long> box_counts;     // N(eps) per used scale
  double fit_residual = 0.0;        // RMS residual of the log-log fit
  bool degenerate = false;          // all points identical
};

DimensionEstimate box_counting_dimension(const std::vector<Point2>& points,
                                         int scale_levels = 8);

// Max over probe states of the estimated spectral norm of the step's
// h-Jacobian; this is the contraction factor L used by the Appendix-style
// bounds below.
double contraction_factor_estimate(const Model& model, const std::vector<Vec>& probes,
                                   const Vec& x);

struct ErrorDecayReport {
  bool applicable = false;  // false when L >= 1 or no fixed point was reached
  double contraction = 0.0;
  int violations = 0;
  double tightest_ratio = 0.0;  // max over t of ||h_t - h*|| / bound_t
  double fixed_point_gap = 0.0; // final iteration increment
  std::vector<double> errors;   // ||h_t - h*||
  std::vector<double> bounds;   // L^t/(1-L) * ||h_1 - h_0||
};

// Iterates to the numerical fixed point (increment < 1e-12) and checks
// ||h_t - h*|| <= L^t/(1-L) * ||h_1 - h_0|| for every t <= steps, with
// relative tolerance `tol`. Probes for L cover the iterates, segment
// interpolants between consecutive iterates, and the fixed point.
ErrorDecayReport error_decay_check(const Model& model, const Vec& x, int steps,
                                   double tol = 1e-6);

struct GradientBoundReport {
  bool applicable = false;
  double contraction = 0.0;
  int violations = 0;
  std::vector<double> norms;   // ||d h_t / d h_0|| for t = 0..steps
  std::vector<double> bounds;  // L^t + tol
};

// Power-iteration norm of the composed Jacobian d h_t / d h_0 (via chained
// forward and reverse products) checked against L^t + tol.
GradientBoundReport gradient_bound_check(const Model& model, const Vec& x, int steps,
                                         double tol = 1e-6);

struct ScalingCheckReport {
  double max_transition_dev = 0.0;  // A_lam(h) vs lam*A(h)
  double max_input_dev = 0.0;       // B_lam(x) vs lam^{1+H}*B(x)
  double max_readout_dev = 0.0;     // C path vs lam^{-H}*C(h)
  double max_feedthrough_dev = 0.0; // D path across different lam
  bool pass(double tol = 1e-12) const;
};

// Executes the operator-level scaling identities on random (h, x) pairs
// across a lambda x Hurst grid.
ScalingCheckReport scaling_equivariance_check(const OperatorSet& ops, int trials,
                                              std::uint64_t seed = 7);

// Cosine between two flattened gradient bundles; 0 when either bundle is
// zero (flagged through `degenerate` when provided).
double gradient_conflict(const Model& model, const ModelGrad& grad_task,
                         const ModelGrad& grad_rank, bool* degenerate = nullptr);

// Planar fixtures for validating the dimension estimator.
std::vector<Point2> koch_curve_points(int iterations);
std::vector<Point2> segment_points(int count);
std::vector<Point2> grid_points(int per_side);

// Projection of a high-dimensional point cloud onto its top two principal
// components; used to pool latent trajectories for box counting.
std::vector<Point2> project_to_plane(const std::vector<Vec>& points);

}  // namespace frost
