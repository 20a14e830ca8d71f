#pragma once

#include <span>

#include "frost/dataset.hpp"
#include "frost/halting.hpp"

namespace frost {

struct TrainingConfig {
  int steps = 16;       // unroll depth T
  int batch_size = 32;  // B
  double alpha_rel = 0.7;
  double alpha_abs = 0.3;
  double delta = 0.1;  // ranking margin
  double lr = 0.05;
  double momentum = 0.9;
  int epochs = 30;
  int k_split = 8;
  std::uint64_t seed = 42;
  bool detach_backbone_for_ranking = false;

  void validate() const;
};

struct LossBreakdown {
  double task = 0.0;
  double rank_rel = 0.0;
  double rank_abs = 0.0;
  double total = 0.0;
};

// Numerically stable log-softmax cross-entropy.
double cross_entropy(const Vec& logits, int label);
Vec cross_entropy_grad(const Vec& logits, int label);  // softmax - onehot

// Mean cross-entropy over the batch, final iteration only.
double task_loss(const std::vector<Vec>& final_logits, const std::vector<int>& labels);

// sum_t mean over (easy, hard) pairs of max(0, s_hard - s_easy + delta).
double relative_rank_loss(const std::vector<std::vector<double>>& scores,
                          const EasyHardSplit& split, double delta);

// -sum_t [ mean_E log s + mean_H log(1-s) ], scores clamped to
// [1e-7, 1-1e-7]; minimized when easy scores reach 1 and hard scores 0.
double absolute_anchor_loss(const std::vector<std::vector<double>>& scores,
                            const EasyHardSplit& split);

LossBreakdown total_loss(double task, double rank_rel, double rank_abs,
                         const TrainingConfig& cfg);

struct OperatorSetGrad {
  MLPGrad a;
  AffineGrad b, c, d;
  double rho = 0.0;
};

struct ModelGrad {
  std::vector<OperatorSetGrad> ops;
  AffineGrad gate;
  Vec w_s;
  double b_s = 0.0;
};

ModelGrad zeros_like_grad(const Model& model, const HaltingHead& head);

// Deterministic flat ordering over every trainable scalar. rho is only
// trainable for Frost models; the Hurst exponent is never included; the
// gate participates only in gated step mode.
std::vector<double*> parameter_pointers(Model& model, HaltingHead& head);
std::vector<double*> gradient_pointers(const Model& model, ModelGrad& grad);
Vec flatten_gradient(const Model& model, const ModelGrad& grad);

// Per-sample forward pass with the intermediates the reverse sweep needs.
struct StepCache {
  MLPCache a_cache;
  Vec a_out;     // A(h_{t-1})
  Vec b_x;       // B_t(x)
  Vec gate_val;  // gated mode only
  Vec update;    // gated mode only: A(h_{t-1}) + B(x)
};

struct ForwardPass {
  Trajectory traj;
  std::vector<StepCache> steps;  // index t-1 for step t
  std::vector<Vec> c_out;        // C_t(h_t), index t-1
  Vec d_x;                       // D(x) (first parameter copy for Vanilla: per-step in c path)
};

ForwardPass forward_sample(const Model& model, const HaltingHead& head, const Vec& x,
                           int steps);

struct BatchEval {
  std::vector<ForwardPass> passes;
  std::vector<std::vector<double>> losses;  // B x T cross-entropy grid
  std::vector<std::vector<double>> scores;  // B x T halting scores
};

BatchEval forward_batch(const Model& model, const HaltingHead& head,
                        std::span<const Sample> batch, int steps);

// Component weights for the backward sweep; train_step uses
// (1, alpha_rel, alpha_abs), diagnostics can isolate components.
struct LossWeights {
  double task = 1.0;
  double rel = 0.0;
  double abs = 0.0;
};

LossBreakdown batch_loss_given_split(const BatchEval& eval,
                                     const std::vector<int>& labels,
                                     const EasyHardSplit& split, double delta,
                                     const LossWeights& weights);

// Reverse sweep through the unrolled dynamics (full backprop-through-time
// over the shared parameters). Accumulates into `out` and returns the loss
// breakdown for the given weights.
LossBreakdown batch_gradient(const Model& model, const HaltingHead& head,
                             const BatchEval& eval, const std::vector<int>& labels,
                             const EasyHardSplit& split, double delta,
                             const LossWeights& weights, bool detach_backbone,
                             ModelGrad& out);

class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void apply(std::span<double* const> params, std::span<double* const> grads);
  double lr() const { return lr_; }

 private:
  double lr_;
  double momentum_;
  Vec velocity_;
};

struct TrainStepResult {
  LossBreakdown loss;
  double grad_norm = 0.0;
  double lambda = 0.0;
  double mean_s_easy = 0.0;
  double mean_s_hard = 0.0;
};

// Forward, rank, backward, update, then feed the (detached) scores to the
// sketch. Throws NumericError without touching parameters if any gradient
// is non-finite.
TrainStepResult train_step(Model& model, HaltingHead& head, std::span<const Sample> batch,
                           const TrainingConfig& cfg, KllSketch& sketch,
                           SgdMomentum& opt);

struct TrainLogRow {
  int step = 0;
  double lambda = 0.0;
  double loss_task = 0.0;
  double loss_rel = 0.0;
  double loss_abs = 0.0;
  double mean_s_easy = 0.0;
  double mean_s_hard = 0.0;
  double s_halt = 0.0;
};

struct TrainingLog {
  std::vector<TrainLogRow> rows;
};

// Epochs of shuffled mini-batches (partial trailing batches are dropped so
// the easy/hard split size stays valid). The policy's sketch accumulates
// scores across the run unless reset_sketch_per_epoch is set.
TrainingLog train(Model& model, HaltingHead& head, const std::vector<Sample>& data,
                  const TrainingConfig& cfg, HaltingPolicy& policy,
                  bool reset_sketch_per_epoch = false);

}  // namespace frost
