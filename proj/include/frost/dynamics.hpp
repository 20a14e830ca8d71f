#pragma once

#include <functional>

#include "frost/numerics.hpp"

namespace frost {

// lambda is kept positive through lambda = exp(rho); rho is the trained
// parameter. The Hurst exponent stays fixed for the lifetime of a model.
struct ScaleParameters {
  double rho = -0.6931471805599453;  // ln(0.5)
  double hurst = 0.8;
};

double lambda_value(const ScaleParameters& p);

// Stationary operators of one state-space cell:
//   h' = h + lambda*A(h) + lambda^{1+H}*B(x)
//   y  = lambda^{-H}*C(h) + D(x)
struct OperatorSet {
  MLPMap a;      // D_hid -> D_hid, nonlinear transition
  AffineMap b;   // D_in  -> D_hid
  AffineMap c;   // D_hid -> D_out
  AffineMap d;   // D_in  -> D_out, feedthrough
  ScaleParameters scale;
};

Vec scaled_transition(const OperatorSet& ops, const Vec& h);  // lambda*A(h)
Vec scaled_input(const OperatorSet& ops, const Vec& x);       // lambda^{1+H}*B(x)
Vec frost_step(const OperatorSet& ops, const Vec& h, const Vec& x);
Vec readout(const OperatorSet& ops, const Vec& h, const Vec& x);

enum class ModelKind { kFrost, kVanilla, kRecurrent, kBasicSsm };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

enum class StepMode { kStandard, kGated };

struct Dims {
  int d_in = 16;
  int d_hid = 32;
  int d_out = 4;
};

// Vanilla carries one OperatorSet per step; the weight-tied kinds carry one.
struct Model {
  ModelKind kind = ModelKind::kFrost;
  Dims dims;
  int t_max = 16;
  StepMode step_mode = StepMode::kStandard;
  std::vector<OperatorSet> ops;
  AffineMap gate;  // D_hid -> D_hid, used only in kGated mode

  const OperatorSet& ops_at(int t) const;
  OperatorSet& ops_at(int t);
};

// One step of the model's update rule. `t` is the 0-based step index and
// selects the parameter copy for Vanilla; the other kinds ignore it.
//   Frost:     h + lambda*A(h) + lambda^{1+H}*B(x)
//   Vanilla:   h + A_t(h) + B_t(x)
//   Recurrent: A(h) + B(x)
//   BasicSSM:  h + A(h) + B(x)
Vec model_step(const Model& m, const Vec& h, const Vec& x, int t);
// Frost: lambda^{-H}*C(h) + D(x); baselines: C(h) + D(x).
Vec model_readout(const Model& m, const Vec& h, const Vec& x, int t);

struct Trajectory {
  std::vector<Vec> states;       // h_0 .. h_T
  std::vector<Vec> outputs;      // y_1 .. y_T
  std::vector<double> scores;    // s_1 .. s_T when a score hook is given
  Vec input;

  int steps() const { return static_cast<int>(states.size()) - 1; }
};

using ScoreFn = std::function<double(const Vec&)>;

// Applies the step rule `steps` times from h_0 = 0 with the same static
// input x, recording states, per-step readouts, and (optionally) scores.
// Throws NumericError naming the step index on divergence.
Trajectory unroll(const Model& m, const Vec& x, int steps, const ScoreFn& score = {});

struct InitOptions {
  // Upper bound for the estimated spectral norm of the step's h-Jacobian
  // at h_0 = 0 for the residual-step kinds (Frost, Vanilla, BasicSSM), and
  // for ||J_A(0)|| for Recurrent.
  double target_step_norm = 0.9;
  // Scale applied to B's fan-based init so the input drive stays within
  // the bounded reach of the tanh transition.
  double input_gain = 0.2;
  // Relative magnitude of the unstructured noise mixed into A's output
  // layer on top of the contractive pairing.
  double output_noise = 0.1;
};

// Builds a model with the stated dims. A is a two-layer tanh MLP whose
// output layer is initialized as a negative multiple of the (orthogonal)
// first layer's transpose, so the composed step map starts out contractive;
// the multiplier is then adjusted until the estimated step-Jacobian norm at
// h_0 meets `target_step_norm`.
Model make_model(ModelKind kind, Dims dims, int t_max, std::uint64_t seed,
                 const InitOptions& opts = {});

// Linearization of the step map in h at a fixed (h, x). Exposes J*v and
// J^T*v products so spectral norms of single steps and of step compositions
// can be estimated by power iteration without forming the matrix.
class StepLinearization {
 public:
  StepLinearization(const Model& m, const Vec& h, const Vec& x, int t = 0);

  Vec apply(const Vec& v) const;
  Vec apply_transpose(const Vec& v) const;
  int dim() const { return dim_; }

 private:
  const Model* model_;
  int t_;
  int dim_;
  double a_scale_;     // factor on J_A (lambda for Frost, 1 otherwise)
  bool with_identity_; // residual kinds carry the identity term
  MLPCache a_cache_;
  // Gated mode extras: gate value, its sigmoid derivative, and the raw
  // update A(h)+B(x) the gate multiplies.
  Vec gate_val_, gate_deriv_, update_;
};

// Estimated spectral norm at h_0 = 0 of d step / d h for ops_at(t).
double step_jacobian_norm_at_origin(const Model& m, int t = 0);

}  // namespace frost
