#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "frost/training.hpp"
#include "oracles.hpp"

using namespace frost;

namespace {

HaltingHead random_head(int d_hid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-0.4, 0.4);
  HaltingHead head;
  head.w_s.resize(d_hid);
  for (double& w : head.w_s) w = uni(rng);
  head.b_s = uni(rng);
  return head;
}

std::vector<Sample> random_batch(int count, int d_in, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.5);
  std::vector<Sample> batch(count);
  for (int i = 0; i < count; ++i) {
    batch[i].x.resize(d_in);
    for (double& v : batch[i].x) v = gauss(rng);
    batch[i].label = i % classes;
  }
  return batch;
}

double objective_at(Model& model, HaltingHead& head, const std::vector<Sample>& batch,
                    const std::vector<int>& labels, const EasyHardSplit& split,
                    const TrainingConfig& cfg) {
  BatchEval eval = forward_batch(model, head, batch, cfg.steps);
  return batch_loss_given_split(eval, labels, split, cfg.delta,
                                {1.0, cfg.alpha_rel, cfg.alpha_abs})
      .total;
}

// Full-objective gradient check on a tiny instance: analytic BPTT against
// central differences over every trainable scalar, with the easy/hard
// split frozen at the base point (ranks are discrete and carry no
// gradient).
double gradient_check(ModelKind kind, StepMode mode, std::uint64_t seed) {
  const Dims dims{2, 3, 2};
  const TrainingConfig cfg = [] {
    TrainingConfig c;
    c.steps = 2;
    c.batch_size = 2;
    c.k_split = 1;
    return c;
  }();

  Model model = make_model(kind, dims, cfg.steps, seed);
  model.step_mode = mode;
  HaltingHead head = random_head(dims.d_hid, seed + 1);
  const std::vector<Sample> batch = random_batch(cfg.batch_size, dims.d_in, dims.d_out,
                                                 seed + 2);
  std::vector<int> labels;
  for (const auto& s : batch) labels.push_back(s.label);

  BatchEval eval = forward_batch(model, head, batch, cfg.steps);
  const auto records = batch_time_rank(eval.losses);
  const auto split = split_easy_hard(records, cfg.batch_size, cfg.k_split);

  ModelGrad grad = zeros_like_grad(model, head);
  batch_gradient(model, head, eval, labels, split, cfg.delta,
                 {1.0, cfg.alpha_rel, cfg.alpha_abs}, false, grad);
  const Vec analytic = flatten_gradient(model, grad);

  auto params = parameter_pointers(model, head);
  REQUIRE(params.size() == analytic.size());
  Vec fd(params.size());
  const double eps = 1e-5;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = *params[k];
    *params[k] = saved + eps;
    const double fp = objective_at(model, head, batch, labels, split, cfg);
    *params[k] = saved - eps;
    const double fm = objective_at(model, head, batch, labels, split, cfg);
    *params[k] = saved;
    fd[k] = (fp - fm) / (2.0 * eps);
  }
  return norm(sub(analytic, fd)) / std::max(norm(fd), 1e-12);
}

}  // namespace

TEST_CASE("cross_entropy closed forms and oracle agreement") {
  CHECK(cross_entropy({1.0, 1.0, 1.0, 1.0}, 2) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // Confident-correct logits drive the loss to zero as the margin grows.
  double prev = cross_entropy({1.0, 0.0, 0.0}, 0);
  for (double margin : {5.0, 10.0, 20.0}) {
    const double cur = cross_entropy({margin, 0.0, 0.0}, 0);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(cross_entropy({30.0, 0.0, 0.0}, 0) < 1e-12);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vec logits(4);
    for (double& v : logits) v = gauss(rng);
    const int label = static_cast<int>(rng() % 4);
    CHECK(cross_entropy(logits, label) ==
          doctest::Approx(oracles::reference_cross_entropy(logits, label)).epsilon(1e-10));
  }

  CHECK_THROWS_AS(cross_entropy({1.0, 2.0}, 2), std::out_of_range);
  CHECK_THROWS_AS(cross_entropy({1.0, 2.0}, -1), std::out_of_range);
}

TEST_CASE("relative_rank_loss formula") {
  EasyHardSplit split;
  split.easy = {0};
  split.hard = {1};
  split.k_split = 1;

  CHECK(relative_rank_loss({{0.9}, {0.2}}, split, 0.1) == 0.0);
  CHECK(relative_rank_loss({{0.5}, {0.6}}, split, 0.1) ==
        doctest::Approx(0.2).epsilon(1e-12));

  // All scores equal: the hinge contributes exactly delta per step.
  const double delta = 0.1;
  CHECK(relative_rank_loss({{0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}}, split, delta) ==
        doctest::Approx(3.0 * delta).epsilon(1e-12));

  EasyHardSplit empty;
  CHECK_THROWS_AS(relative_rank_loss({{0.5}}, empty, 0.1), ConfigError);
}

TEST_CASE("absolute_anchor_loss formula") {
  EasyHardSplit split;
  split.easy = {0};
  split.hard = {1};
  split.k_split = 1;

  CHECK(absolute_anchor_loss({{1.0 - 1e-7}, {1e-7}}, split) ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(absolute_anchor_loss({{0.5}, {0.5}}, split) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  // Symmetric under swapping E <-> H with mirrored scores.
  const double forward = absolute_anchor_loss({{0.8, 0.3}, {0.4, 0.9}}, split);
  const double mirrored = absolute_anchor_loss({{0.6, 0.1}, {0.2, 0.7}}, split);
  CHECK(forward == doctest::Approx(mirrored).epsilon(1e-12));

  CHECK_THROWS_AS(absolute_anchor_loss({{1.2}, {0.5}}, split), NumericError);
}

TEST_CASE("total_loss weighting") {
  TrainingConfig cfg;
  cfg.alpha_rel = 0.0;
  cfg.alpha_abs = 0.0;
  CHECK(total_loss(1.7, 9.0, 4.0, cfg).total == 1.7);

  cfg.alpha_rel = 0.7;
  cfg.alpha_abs = 0.3;
  const LossBreakdown b = total_loss(1.0, 2.0, 3.0, cfg);
  CHECK(b.total == doctest::Approx(3.3).epsilon(1e-15));
  CHECK(total_loss(0.0, 0.0, 0.0, cfg).total == 0.0);
}

TEST_CASE("analytic gradients match finite differences on a tiny instance") {
  CHECK(gradient_check(ModelKind::kFrost, StepMode::kStandard, 101) < 1e-3);
  CHECK(gradient_check(ModelKind::kVanilla, StepMode::kStandard, 102) < 1e-3);
  CHECK(gradient_check(ModelKind::kRecurrent, StepMode::kStandard, 103) < 1e-3);
  CHECK(gradient_check(ModelKind::kBasicSsm, StepMode::kStandard, 104) < 1e-3);
  CHECK(gradient_check(ModelKind::kFrost, StepMode::kGated, 105) < 1e-3);
}

TEST_CASE("detach flag isolates the backbone from ranking gradients") {
  const Dims dims{2, 3, 2};
  Model model = make_model(ModelKind::kFrost, dims, 2, 7);
  HaltingHead head = random_head(dims.d_hid, 8);
  const auto batch = random_batch(2, dims.d_in, dims.d_out, 9);
  std::vector<int> labels{batch[0].label, batch[1].label};

  BatchEval eval = forward_batch(model, head, batch, 2);
  const auto split = split_easy_hard(batch_time_rank(eval.losses), 2, 1);

  ModelGrad detached = zeros_like_grad(model, head);
  batch_gradient(model, head, eval, labels, split, 0.1, {0.0, 0.7, 0.3}, true, detached);
  // Ranking-only with detach: every backbone gradient is exactly zero.
  for (const auto& layer : detached.ops[0].a.layers) {
    for (double g : layer.d_weight.data) CHECK(g == 0.0);
  }
  for (double g : detached.ops[0].b.d_weight.data) CHECK(g == 0.0);
  CHECK(detached.ops[0].rho == 0.0);
  CHECK(norm(detached.w_s) > 0.0);

  ModelGrad attached = zeros_like_grad(model, head);
  batch_gradient(model, head, eval, labels, split, 0.1, {0.0, 0.7, 0.3}, false, attached);
  double backbone_norm = 0.0;
  for (const auto& layer : attached.ops[0].a.layers) {
    for (double g : layer.d_weight.data) backbone_norm += g * g;
  }
  CHECK(backbone_norm > 0.0);
}

TEST_CASE("task supervision touches only the final iteration") {
  const Dims dims{2, 3, 2};
  Model model = make_model(ModelKind::kFrost, dims, 3, 21);
  HaltingHead head = random_head(dims.d_hid, 22);
  const auto batch = random_batch(2, dims.d_in, dims.d_out, 23);
  std::vector<int> labels{batch[0].label, batch[1].label};

  BatchEval eval = forward_batch(model, head, batch, 3);
  const auto split = split_easy_hard(batch_time_rank(eval.losses), 2, 1);

  ModelGrad base = zeros_like_grad(model, head);
  batch_gradient(model, head, eval, labels, split, 0.1, {1.0, 0.0, 0.0}, false, base);

  // Corrupt every intermediate readout; with task-only weights the
  // gradient must not change (supervision reaches only t = T).
  BatchEval tampered = eval;
  for (auto& pass : tampered.passes) {
    for (std::size_t t = 0; t + 1 < pass.traj.outputs.size(); ++t) {
      for (double& v : pass.traj.outputs[t]) v = 1e6 * (v + 1.0);
    }
  }
  ModelGrad after = zeros_like_grad(model, head);
  batch_gradient(model, head, tampered, labels, split, 0.1, {1.0, 0.0, 0.0}, false, after);
  CHECK(flatten_gradient(model, base) == flatten_gradient(model, after));
}

TEST_CASE("sgd momentum arithmetic") {
  double p = 1.0, g = 0.5;
  SgdMomentum opt(0.1, 0.9);
  double* pp = &p;
  double* gp = &g;
  opt.apply(std::span<double* const>(&pp, 1), std::span<double* const>(&gp, 1));
  CHECK(p == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
  opt.apply(std::span<double* const>(&pp, 1), std::span<double* const>(&gp, 1));
  CHECK(p == doctest::Approx(0.95 - 0.1 * (0.9 * 0.5 + 0.5)).epsilon(1e-15));
}

TEST_CASE("train_step with zero learning rate leaves parameters untouched") {
  const Dims dims{4, 6, 3};
  Model model = make_model(ModelKind::kFrost, dims, 4, 31);
  HaltingHead head = random_head(dims.d_hid, 32);
  auto batch = random_batch(4, dims.d_in, dims.d_out, 33);

  TrainingConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 4;
  cfg.k_split = 2;
  cfg.lr = 0.0;

  auto params = parameter_pointers(model, head);
  Vec before;
  for (double* p : params) before.push_back(*p);

  KllSketch sketch(64, 0);
  SgdMomentum opt(cfg.lr, cfg.momentum);
  TrainStepResult res = train_step(model, head, batch, cfg, sketch, opt);
  CHECK(std::isfinite(res.loss.total));
  CHECK(res.loss.total ==
        doctest::Approx(res.loss.task + 0.7 * res.loss.rank_rel + 0.3 * res.loss.rank_abs)
            .epsilon(1e-12));
  CHECK(sketch.count() == 4 * 4);  // every (sample, step) score lands in the sketch

  Vec after;
  for (double* p : params) after.push_back(*p);
  CHECK(before == after);
}

TEST_CASE("divergent forward aborts the step without a parameter update") {
  const Dims dims{4, 6, 3};
  Model model = make_model(ModelKind::kFrost, dims, 4, 41);
  model.ops[0].scale.rho = 400.0;  // exp overflows, the forward pass goes non-finite
  HaltingHead head = random_head(dims.d_hid, 42);
  auto batch = random_batch(4, dims.d_in, dims.d_out, 43);

  TrainingConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 4;
  cfg.k_split = 2;

  auto params = parameter_pointers(model, head);
  Vec before;
  for (double* p : params) before.push_back(*p);

  KllSketch sketch(64, 0);
  SgdMomentum opt(cfg.lr, cfg.momentum);
  CHECK_THROWS_AS(train_step(model, head, batch, cfg, sketch, opt), NumericError);
  Vec after;
  for (double* p : params) after.push_back(*p);
  CHECK(before == after);
  CHECK(sketch.empty());
}

TEST_CASE("train: zero epochs, determinism, and lambda positivity") {
  const Dims dims{4, 6, 3};
  auto make_data = [&] {
    return random_batch(64, dims.d_in, dims.d_out, 51);
  };

  TrainingConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 8;
  cfg.k_split = 2;
  cfg.epochs = 2;
  cfg.lr = 0.02;
  cfg.seed = 7;

  SUBCASE("zero epochs leaves everything untouched") {
    Model model = make_model(ModelKind::kFrost, dims, 4, 61);
    HaltingHead head = random_head(dims.d_hid, 62);
    auto params = parameter_pointers(model, head);
    Vec before;
    for (double* p : params) before.push_back(*p);

    TrainingConfig zero = cfg;
    zero.epochs = 0;
    HaltingPolicy policy;
    policy.sketch = KllSketch(64, 1);
    TrainingLog log = train(model, head, make_data(), zero, policy);
    CHECK(log.rows.empty());
    Vec after;
    for (double* p : params) after.push_back(*p);
    CHECK(before == after);
  }

  SUBCASE("same seed gives bit-identical loss curves; lambda stays positive") {
    auto run = [&] {
      Model model = make_model(ModelKind::kFrost, dims, 4, 61);
      HaltingHead head = random_head(dims.d_hid, 62);
      HaltingPolicy policy;
      policy.sketch = KllSketch(64, 1);
      return train(model, head, make_data(), cfg, policy);
    };
    TrainingLog a = run();
    TrainingLog b = run();
    REQUIRE(a.rows.size() == b.rows.size());
    REQUIRE(!a.rows.empty());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      CHECK(a.rows[i].lambda == b.rows[i].lambda);
      CHECK(a.rows[i].loss_task == b.rows[i].loss_task);
      CHECK(a.rows[i].loss_rel == b.rows[i].loss_rel);
      CHECK(a.rows[i].loss_abs == b.rows[i].loss_abs);
      CHECK(a.rows[i].lambda > 0.0);
    }
  }

  SUBCASE("empty dataset is rejected") {
    Model model = make_model(ModelKind::kFrost, dims, 4, 61);
    HaltingHead head = random_head(dims.d_hid, 62);
    HaltingPolicy policy;
    policy.sketch = KllSketch(64, 1);
    std::vector<Sample> none;
    CHECK_THROWS_AS(train(model, head, none, cfg, policy), ConfigError);
  }
}
