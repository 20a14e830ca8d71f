#include "frost/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>

namespace frost {

namespace {
constexpr double kScoreClamp = 1e-7;
}

void TrainingConfig::validate() const {
  if (steps < 1) throw ConfigError("TrainingConfig: steps must be >= 1");
  if (batch_size < 2) throw ConfigError("TrainingConfig: batch_size must be >= 2");
  if (alpha_rel < 0.0 || alpha_abs < 0.0) {
    throw ConfigError("TrainingConfig: alpha weights must be >= 0");
  }
  if (delta <= 0.0) throw ConfigError("TrainingConfig: delta must be > 0");
  if (k_split < 1 || 2 * k_split > batch_size) {
    throw ConfigError("TrainingConfig: need 1 <= k_split <= batch_size/2");
  }
  if (epochs < 0) throw ConfigError("TrainingConfig: epochs must be >= 0");
  if (lr < 0.0) throw ConfigError("TrainingConfig: lr must be >= 0");
}

double cross_entropy(const Vec& logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(logits.size()) +
                            " classes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  return m + std::log(sum) - logits[label];
}

Vec cross_entropy_grad(const Vec& logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw std::out_of_range("cross_entropy_grad: label out of range");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  Vec g(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    g[i] = std::exp(logits[i] - m);
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  g[label] -= 1.0;
  return g;
}

double task_loss(const std::vector<Vec>& final_logits, const std::vector<int>& labels) {
  if (final_logits.empty() || final_logits.size() != labels.size()) {
    throw ShapeError("task_loss: logits/labels size mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < final_logits.size(); ++i) {
    sum += cross_entropy(final_logits[i], labels[i]);
  }
  return sum / static_cast<double>(final_logits.size());
}

double relative_rank_loss(const std::vector<std::vector<double>>& scores,
                          const EasyHardSplit& split, double delta) {
  if (split.easy.empty() || split.hard.empty()) {
    throw ConfigError("relative_rank_loss: empty easy or hard set");
  }
  const double pair_count =
      static_cast<double>(split.easy.size()) * static_cast<double>(split.hard.size());
  const std::size_t steps = scores.front().size();
  double loss = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    double acc = 0.0;
    for (int i : split.easy) {
      for (int j : split.hard) {
        acc += std::max(0.0, scores[j][t] - scores[i][t] + delta);
      }
    }
    loss += acc / pair_count;
  }
  return loss;
}

double absolute_anchor_loss(const std::vector<std::vector<double>>& scores,
                            const EasyHardSplit& split) {
  if (split.easy.empty() || split.hard.empty()) {
    throw ConfigError("absolute_anchor_loss: empty easy or hard set");
  }
  const std::size_t steps = scores.front().size();
  double loss = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    double easy_acc = 0.0;
    for (int i : split.easy) {
      const double s = scores[i][t];
      if (s < 0.0 || s > 1.0) throw NumericError("absolute_anchor_loss: score outside [0, 1]");
      easy_acc += std::log(std::clamp(s, kScoreClamp, 1.0 - kScoreClamp));
    }
    double hard_acc = 0.0;
    for (int j : split.hard) {
      const double s = scores[j][t];
      if (s < 0.0 || s > 1.0) throw NumericError("absolute_anchor_loss: score outside [0, 1]");
      hard_acc += std::log(1.0 - std::clamp(s, kScoreClamp, 1.0 - kScoreClamp));
    }
    loss -= easy_acc / static_cast<double>(split.easy.size()) +
            hard_acc / static_cast<double>(split.hard.size());
  }
  return loss;
}

LossBreakdown total_loss(double task, double rank_rel, double rank_abs,
                         const TrainingConfig& cfg) {
  LossBreakdown out;
  out.task = task;
  out.rank_rel = rank_rel;
  out.rank_abs = rank_abs;
  out.total = task + cfg.alpha_rel * rank_rel + cfg.alpha_abs * rank_abs;
  return out;
}

ModelGrad zeros_like_grad(const Model& model, const HaltingHead& head) {
  ModelGrad g;
  g.ops.reserve(model.ops.size());
  for (const auto& ops : model.ops) {
    OperatorSetGrad og;
    og.a = zeros_like(ops.a);
    og.b = zeros_like(ops.b);
    og.c = zeros_like(ops.c);
    og.d = zeros_like(ops.d);
    g.ops.push_back(std::move(og));
  }
  g.gate = zeros_like(model.gate);
  g.w_s.assign(head.w_s.size(), 0.0);
  return g;
}

namespace {

void append_range(std::vector<double*>& out, Vec& v) {
  for (double& x : v) out.push_back(&x);
}
void append_range(std::vector<double*>& out, Matrix& m) {
  for (double& x : m.data) out.push_back(&x);
}

}  // namespace

std::vector<double*> parameter_pointers(Model& model, HaltingHead& head) {
  std::vector<double*> out;
  for (auto& ops : model.ops) {
    for (auto& layer : ops.a.layers) {
      append_range(out, layer.weight);
      append_range(out, layer.bias);
    }
    append_range(out, ops.b.weight);
    append_range(out, ops.b.bias);
    append_range(out, ops.c.weight);
    append_range(out, ops.c.bias);
    append_range(out, ops.d.weight);
    append_range(out, ops.d.bias);
    if (model.kind == ModelKind::kFrost) out.push_back(&ops.scale.rho);
  }
  if (model.kind == ModelKind::kFrost && model.step_mode == StepMode::kGated) {
    append_range(out, model.gate.weight);
    append_range(out, model.gate.bias);
  }
  append_range(out, head.w_s);
  out.push_back(&head.b_s);
  return out;
}

std::vector<double*> gradient_pointers(const Model& model, ModelGrad& grad) {
  std::vector<double*> out;
  for (auto& ops : grad.ops) {
    for (auto& layer : ops.a.layers) {
      append_range(out, layer.d_weight);
      append_range(out, layer.d_bias);
    }
    append_range(out, ops.b.d_weight);
    append_range(out, ops.b.d_bias);
    append_range(out, ops.c.d_weight);
    append_range(out, ops.c.d_bias);
    append_range(out, ops.d.d_weight);
    append_range(out, ops.d.d_bias);
    if (model.kind == ModelKind::kFrost) out.push_back(&ops.rho);
  }
  if (model.kind == ModelKind::kFrost && model.step_mode == StepMode::kGated) {
    append_range(out, grad.gate.d_weight);
    append_range(out, grad.gate.d_bias);
  }
  append_range(out, grad.w_s);
  out.push_back(&grad.b_s);
  return out;
}

Vec flatten_gradient(const Model& model, const ModelGrad& grad) {
  auto ptrs = gradient_pointers(model, const_cast<ModelGrad&>(grad));
  Vec flat;
  flat.reserve(ptrs.size());
  for (double* p : ptrs) flat.push_back(*p);
  return flat;
}

ForwardPass forward_sample(const Model& model, const HaltingHead& head, const Vec& x,
                           int steps) {
  if (steps < 1) throw ConfigError("forward_sample: steps must be >= 1");
  ForwardPass pass;
  Trajectory& traj = pass.traj;
  traj.input = x;
  traj.states.emplace_back(model.dims.d_hid, 0.0);
  pass.d_x = affine_apply(model.ops_at(0).d, x);

  const bool gated =
      model.kind == ModelKind::kFrost && model.step_mode == StepMode::kGated;

  for (int t = 1; t <= steps; ++t) {
    const OperatorSet& ops = model.ops_at(t - 1);
    const Vec& h_prev = traj.states.back();

    StepCache cache;
    cache.a_out = mlp_apply(ops.a, h_prev, cache.a_cache);
    cache.b_x = affine_apply(ops.b, x);

    Vec h;
    if (gated) {
      cache.gate_val =
          activation_apply(Activation::kSigmoid, affine_apply(model.gate, h_prev)).value;
      cache.update = add(cache.a_out, cache.b_x);
      h = h_prev;
      for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] += cache.gate_val[i] * cache.update[i];
      }
    } else {
      switch (model.kind) {
        case ModelKind::kFrost: {
          const double lam = lambda_value(ops.scale);
          h = h_prev;
          axpy(1.0, scaled(cache.a_out, lam), h);
          axpy(1.0, scaled(cache.b_x, std::pow(lam, 1.0 + ops.scale.hurst)), h);
          break;
        }
        case ModelKind::kVanilla:
        case ModelKind::kBasicSsm:
          h = h_prev;
          axpy(1.0, cache.a_out, h);
          axpy(1.0, cache.b_x, h);
          break;
        case ModelKind::kRecurrent:
          h = add(cache.a_out, cache.b_x);
          break;
      }
    }
    if (!all_finite(h)) {
      throw NumericError("forward_sample: non-finite state at step " + std::to_string(t));
    }

    pass.c_out.push_back(affine_apply(ops.c, h));
    Vec y;
    if (model.kind == ModelKind::kFrost) {
      y = scaled(pass.c_out.back(), std::pow(lambda_value(ops.scale), -ops.scale.hurst));
      axpy(1.0, affine_apply(ops.d, x), y);
    } else {
      y = add(pass.c_out.back(), affine_apply(ops.d, x));
    }
    traj.outputs.push_back(std::move(y));
    traj.scores.push_back(halting_score(head, h));
    traj.states.push_back(std::move(h));
    pass.steps.push_back(std::move(cache));
  }
  return pass;
}

BatchEval forward_batch(const Model& model, const HaltingHead& head,
                        std::span<const Sample> batch, int steps) {
  if (batch.empty()) throw ConfigError("forward_batch: empty batch");
  BatchEval eval;
  eval.passes.reserve(batch.size());
  eval.losses.resize(batch.size());
  eval.scores.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ForwardPass pass = forward_sample(model, head, batch[i].x, steps);
    eval.losses[i].resize(steps);
    for (int t = 0; t < steps; ++t) {
      eval.losses[i][t] = cross_entropy(pass.traj.outputs[t], batch[i].label);
    }
    eval.scores[i] = pass.traj.scores;
    eval.passes.push_back(std::move(pass));
  }
  return eval;
}

LossBreakdown batch_loss_given_split(const BatchEval& eval,
                                     const std::vector<int>& labels,
                                     const EasyHardSplit& split, double delta,
                                     const LossWeights& weights) {
  std::vector<Vec> final_logits;
  final_logits.reserve(eval.passes.size());
  for (const auto& pass : eval.passes) final_logits.push_back(pass.traj.outputs.back());

  LossBreakdown out;
  out.task = task_loss(final_logits, labels);
  out.rank_rel = relative_rank_loss(eval.scores, split, delta);
  out.rank_abs = absolute_anchor_loss(eval.scores, split);
  out.total = weights.task * out.task + weights.rel * out.rank_rel +
              weights.abs * out.rank_abs;
  return out;
}

namespace {

// dL/ds grid for the weighted ranking losses.
std::vector<std::vector<double>> score_gradients(
    const std::vector<std::vector<double>>& scores, const EasyHardSplit& split,
    double delta, const LossWeights& weights) {
  const std::size_t batch = scores.size();
  const std::size_t steps = scores.front().size();
  std::vector<std::vector<double>> d_s(batch, std::vector<double>(steps, 0.0));

  if (weights.rel != 0.0) {
    const double coeff = weights.rel / (static_cast<double>(split.easy.size()) *
                                        static_cast<double>(split.hard.size()));
    for (std::size_t t = 0; t < steps; ++t) {
      for (int i : split.easy) {
        for (int j : split.hard) {
          if (scores[j][t] - scores[i][t] + delta > 0.0) {
            d_s[j][t] += coeff;
            d_s[i][t] -= coeff;
          }
        }
      }
    }
  }
  if (weights.abs != 0.0) {
    const double easy_w = weights.abs / static_cast<double>(split.easy.size());
    const double hard_w = weights.abs / static_cast<double>(split.hard.size());
    for (std::size_t t = 0; t < steps; ++t) {
      for (int i : split.easy) {
        const double s = scores[i][t];
        // Gradient vanishes where the clamp is active.
        if (s > kScoreClamp && s < 1.0 - kScoreClamp) d_s[i][t] -= easy_w / s;
      }
      for (int j : split.hard) {
        const double s = scores[j][t];
        if (s > kScoreClamp && s < 1.0 - kScoreClamp) d_s[j][t] += hard_w / (1.0 - s);
      }
    }
  }
  return d_s;
}

// Reverse sweep for one sample. d_y_final is dL/dy_T (may be empty when the
// task weight is zero); d_s holds dL/ds_t per step.
void backward_sample(const Model& model, const HaltingHead& head, const ForwardPass& pass,
                     const Vec& d_y_final, const std::vector<double>& d_s,
                     bool detach_backbone, ModelGrad& grad) {
  const int steps = pass.traj.steps();
  const Vec& x = pass.traj.input;
  const bool gated =
      model.kind == ModelKind::kFrost && model.step_mode == StepMode::kGated;

  Vec g_h(model.dims.d_hid, 0.0);  // dL/dh_t for the step being processed
  for (int t = steps; t >= 1; --t) {
    const int idx = model.kind == ModelKind::kVanilla ? t - 1 : 0;
    const OperatorSet& ops = model.ops_at(t - 1);
    OperatorSetGrad& og = grad.ops[idx];
    const StepCache& cache = pass.steps[t - 1];
    const Vec& h_t = pass.traj.states[t];

    // Readout contribution (task supervision reaches only t == steps).
    if (t == steps && !d_y_final.empty()) {
      if (model.kind == ModelKind::kFrost) {
        const double lam = lambda_value(ops.scale);
        const double c_scale = std::pow(lam, -ops.scale.hurst);
        axpy(1.0, affine_vjp(ops.c, h_t, scaled(d_y_final, c_scale), og.c), g_h);
        og.rho += -ops.scale.hurst * c_scale * dot(d_y_final, pass.c_out[t - 1]);
      } else {
        axpy(1.0, affine_vjp(ops.c, h_t, d_y_final, og.c), g_h);
      }
      affine_vjp(ops.d, x, d_y_final, og.d);
    }

    // Halting-score contribution.
    const double u_s = d_s[t - 1];
    if (u_s != 0.0) {
      const double s = pass.traj.scores[t - 1];
      const double z = u_s * s * (1.0 - s);
      axpy(z, h_t, grad.w_s);
      grad.b_s += z;
      if (!detach_backbone) axpy(z, head.w_s, g_h);
    }

    // Propagate through the step to h_{t-1}.
    Vec g_prev;
    if (gated) {
      Vec d_update(model.dims.d_hid), d_gate_pre(model.dims.d_hid);
      for (int i = 0; i < model.dims.d_hid; ++i) {
        const double gv = cache.gate_val[i];
        d_update[i] = g_h[i] * gv;
        d_gate_pre[i] = g_h[i] * cache.update[i] * gv * (1.0 - gv);
      }
      g_prev = g_h;
      axpy(1.0, mlp_vjp(ops.a, cache.a_cache, d_update, og.a), g_prev);
      affine_vjp(ops.b, x, d_update, og.b);
      axpy(1.0, affine_vjp(model.gate, pass.traj.states[t - 1], d_gate_pre, grad.gate),
           g_prev);
    } else {
      switch (model.kind) {
        case ModelKind::kFrost: {
          const double lam = lambda_value(ops.scale);
          const double b_scale = std::pow(lam, 1.0 + ops.scale.hurst);
          og.rho += lam * dot(g_h, cache.a_out) +
                    (1.0 + ops.scale.hurst) * b_scale * dot(g_h, cache.b_x);
          g_prev = g_h;
          axpy(1.0, mlp_vjp(ops.a, cache.a_cache, scaled(g_h, lam), og.a), g_prev);
          affine_vjp(ops.b, x, scaled(g_h, b_scale), og.b);
          break;
        }
        case ModelKind::kVanilla:
        case ModelKind::kBasicSsm:
          g_prev = g_h;
          axpy(1.0, mlp_vjp(ops.a, cache.a_cache, g_h, og.a), g_prev);
          affine_vjp(ops.b, x, g_h, og.b);
          break;
        case ModelKind::kRecurrent:
          g_prev = mlp_vjp(ops.a, cache.a_cache, g_h, og.a);
          affine_vjp(ops.b, x, g_h, og.b);
          break;
        default:
          throw ConfigError("backward_sample: unknown kind");
      }
    }
    g_h = std::move(g_prev);
  }
  // h_0 is the fixed zero vector; its gradient is discarded.
}

}  // namespace

LossBreakdown batch_gradient(const Model& model, const HaltingHead& head,
                             const BatchEval& eval, const std::vector<int>& labels,
                             const EasyHardSplit& split, double delta,
                             const LossWeights& weights, bool detach_backbone,
                             ModelGrad& out) {
  LossBreakdown loss = batch_loss_given_split(eval, labels, split, delta, weights);
  const std::size_t batch = eval.passes.size();
  const auto d_s = score_gradients(eval.scores, split, delta, weights);

  for (std::size_t i = 0; i < batch; ++i) {
    Vec d_y_final;
    if (weights.task != 0.0) {
      d_y_final = cross_entropy_grad(eval.passes[i].traj.outputs.back(), labels[i]);
      const double scale = weights.task / static_cast<double>(batch);
      for (double& v : d_y_final) v *= scale;
    }
    backward_sample(model, head, eval.passes[i], d_y_final, d_s[i], detach_backbone, out);
  }
  return loss;
}

void SgdMomentum::apply(std::span<double* const> params, std::span<double* const> grads) {
  if (params.size() != grads.size()) throw ShapeError("SgdMomentum: size mismatch");
  if (velocity_.empty()) velocity_.assign(params.size(), 0.0);
  if (velocity_.size() != params.size()) {
    throw ShapeError("SgdMomentum: parameter count changed");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity_[i] = momentum_ * velocity_[i] + *grads[i];
    *params[i] -= lr_ * velocity_[i];
  }
}

TrainStepResult train_step(Model& model, HaltingHead& head, std::span<const Sample> batch,
                           const TrainingConfig& cfg, KllSketch& sketch,
                           SgdMomentum& opt) {
  cfg.validate();
  if (static_cast<int>(batch.size()) < 2 * cfg.k_split) {
    throw ConfigError("train_step: batch smaller than 2*k_split");
  }

  BatchEval eval = forward_batch(model, head, batch, cfg.steps);
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto& s : batch) labels.push_back(s.label);

  const auto records = batch_time_rank(eval.losses);
  const auto split = split_easy_hard(records, static_cast<int>(batch.size()), cfg.k_split);

  ModelGrad grad = zeros_like_grad(model, head);
  const LossWeights weights{1.0, cfg.alpha_rel, cfg.alpha_abs};
  LossBreakdown loss = batch_gradient(model, head, eval, labels, split, cfg.delta,
                                      weights, cfg.detach_backbone_for_ranking, grad);

  auto grad_ptrs = gradient_pointers(model, grad);
  double norm_sq = 0.0;
  for (double* g : grad_ptrs) {
    if (!std::isfinite(*g)) {
      throw NumericError("train_step: non-finite gradient; update aborted");
    }
    norm_sq += *g * *g;
  }
  auto param_ptrs = parameter_pointers(model, head);
  opt.apply(param_ptrs, grad_ptrs);

  // Score statistics are detached: the sketch sees values, not gradients.
  for (const auto& row : eval.scores) {
    for (double s : row) sketch.insert(s);
  }

  TrainStepResult result;
  result.loss = loss;
  result.grad_norm = std::sqrt(norm_sq);
  result.lambda = model.kind == ModelKind::kFrost
                      ? lambda_value(model.ops.front().scale)
                      : std::numeric_limits<double>::quiet_NaN();

  double easy_sum = 0.0, hard_sum = 0.0;
  const double steps_d = static_cast<double>(cfg.steps);
  for (int i : split.easy) {
    for (double s : eval.scores[i]) easy_sum += s;
  }
  for (int j : split.hard) {
    for (double s : eval.scores[j]) hard_sum += s;
  }
  result.mean_s_easy = easy_sum / (split.easy.size() * steps_d);
  result.mean_s_hard = hard_sum / (split.hard.size() * steps_d);
  return result;
}

TrainingLog train(Model& model, HaltingHead& head, const std::vector<Sample>& data,
                  const TrainingConfig& cfg, HaltingPolicy& policy,
                  bool reset_sketch_per_epoch) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");

  TrainingLog log;
  SgdMomentum opt(cfg.lr, cfg.momentum);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  bool warned_lambda = false;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (reset_sketch_per_epoch && epoch > 0) policy.sketch.clear();
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t batches = data.size() / cfg.batch_size;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<Sample> batch;
      batch.reserve(cfg.batch_size);
      for (int i = 0; i < cfg.batch_size; ++i) {
        batch.push_back(data[order[b * cfg.batch_size + i]]);
      }
      TrainStepResult res = train_step(model, head, batch, cfg, policy.sketch, opt);

      if (model.kind == ModelKind::kFrost) {
        if (!(res.lambda > 0.0)) {
          throw NumericError("train: lambda lost positivity");
        }
        if (res.lambda >= 1.0 && !warned_lambda) {
          std::cerr << "[frost] warning: lambda = " << res.lambda
                    << " >= 1; the step is no longer nominally contractive\n";
          warned_lambda = true;
        }
      }

      TrainLogRow row;
      row.step = ++step;
      row.lambda = res.lambda;
      row.loss_task = res.loss.task;
      row.loss_rel = res.loss.rank_rel;
      row.loss_abs = res.loss.rank_abs;
      row.mean_s_easy = res.mean_s_easy;
      row.mean_s_hard = res.mean_s_hard;
      row.s_halt = policy.sketch.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : policy.sketch.query(policy.q);
      log.rows.push_back(row);
    }
  }
  return log;
}

}  // namespace frost
