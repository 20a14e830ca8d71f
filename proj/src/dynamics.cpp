#include "frost/dynamics.hpp"

#include <cmath>
#include <random>

namespace frost {

double lambda_value(const ScaleParameters& p) { return std::exp(p.rho); }

Vec scaled_transition(const OperatorSet& ops, const Vec& h) {
  return scaled(mlp_apply(ops.a, h), lambda_value(ops.scale));
}

Vec scaled_input(const OperatorSet& ops, const Vec& x) {
  const double lam = lambda_value(ops.scale);
  return scaled(affine_apply(ops.b, x), std::pow(lam, 1.0 + ops.scale.hurst));
}

Vec frost_step(const OperatorSet& ops, const Vec& h, const Vec& x) {
  // (1-lambda)h + [lambda*h + lambda*A(h) + lambda^{1+H}*B(x)]
  //   = h + lambda*A(h) + lambda^{1+H}*B(x)
  Vec out = h;
  axpy(1.0, scaled_transition(ops, h), out);
  axpy(1.0, scaled_input(ops, x), out);
  return out;
}

Vec readout(const OperatorSet& ops, const Vec& h, const Vec& x) {
  const double lam = lambda_value(ops.scale);
  Vec y = scaled(affine_apply(ops.c, h), std::pow(lam, -ops.scale.hurst));
  axpy(1.0, affine_apply(ops.d, x), y);
  return y;
}

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kFrost: return "frost";
    case ModelKind::kVanilla: return "vanilla";
    case ModelKind::kRecurrent: return "recurrent";
    case ModelKind::kBasicSsm: return "basic_ssm";
  }
  return "frost";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "frost") return ModelKind::kFrost;
  if (name == "vanilla") return ModelKind::kVanilla;
  if (name == "recurrent") return ModelKind::kRecurrent;
  if (name == "basic_ssm") return ModelKind::kBasicSsm;
  throw ConfigError("unknown model kind: " + name);
}

const OperatorSet& Model::ops_at(int t) const {
  if (kind == ModelKind::kVanilla) {
    if (t < 0 || t >= static_cast<int>(ops.size())) {
      throw std::out_of_range("Vanilla step index " + std::to_string(t) +
                              " out of range (have " + std::to_string(ops.size()) +
                              " parameter copies)");
    }
    return ops[t];
  }
  return ops.front();
}

OperatorSet& Model::ops_at(int t) {
  return const_cast<OperatorSet&>(static_cast<const Model&>(*this).ops_at(t));
}

Vec model_step(const Model& m, const Vec& h, const Vec& x, int t) {
  const OperatorSet& ops = m.ops_at(t);
  require_dim(h, static_cast<std::size_t>(m.dims.d_hid), "model_step h");
  require_dim(x, static_cast<std::size_t>(m.dims.d_in), "model_step x");

  if (m.kind == ModelKind::kFrost && m.step_mode == StepMode::kGated) {
    // Per-feature interpolation between h and h + A(h) + B(x); the gate
    // takes over the role of the scalar lambda in the update.
    const Vec gate = activation_apply(Activation::kSigmoid, affine_apply(m.gate, h)).value;
    Vec update = add(mlp_apply(ops.a, h), affine_apply(ops.b, x));
    Vec out = h;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += gate[i] * update[i];
    return out;
  }

  switch (m.kind) {
    case ModelKind::kFrost:
      return frost_step(ops, h, x);
    case ModelKind::kVanilla:
    case ModelKind::kBasicSsm: {
      Vec out = h;
      axpy(1.0, mlp_apply(ops.a, h), out);
      axpy(1.0, affine_apply(ops.b, x), out);
      return out;
    }
    case ModelKind::kRecurrent:
      return add(mlp_apply(ops.a, h), affine_apply(ops.b, x));
  }
  throw ConfigError("model_step: unknown kind");
}

Vec model_readout(const Model& m, const Vec& h, const Vec& x, int t) {
  const OperatorSet& ops = m.ops_at(t);
  if (m.kind == ModelKind::kFrost) return readout(ops, h, x);
  return add(affine_apply(ops.c, h), affine_apply(ops.d, x));
}

Trajectory unroll(const Model& m, const Vec& x, int steps, const ScoreFn& score) {
  if (steps < 1) throw ConfigError("unroll: steps must be >= 1");
  Trajectory traj;
  traj.input = x;
  traj.states.reserve(steps + 1);
  traj.states.emplace_back(m.dims.d_hid, 0.0);  // h_0 = 0
  for (int t = 1; t <= steps; ++t) {
    Vec h = model_step(m, traj.states.back(), x, t - 1);
    if (!all_finite(h)) {
      throw NumericError("unroll: non-finite state at step " + std::to_string(t));
    }
    traj.outputs.push_back(model_readout(m, h, x, t - 1));
    if (score) traj.scores.push_back(score(h));
    traj.states.push_back(std::move(h));
  }
  return traj;
}

namespace {

// Orthonormal columns via twice-through modified Gram-Schmidt.
Matrix random_orthogonal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec> cols(n, Vec(n));
  for (auto& col : cols)
    for (double& v : col) v = gauss(rng);
  for (int pass = 0; pass < 2; ++pass) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < j; ++k) axpy(-dot(cols[k], cols[j]), cols[k], cols[j]);
      const double nj = norm(cols[j]);
      if (nj < 1e-12) throw NumericError("random_orthogonal: rank deficiency");
      for (double& v : cols[j]) v /= nj;
    }
  }
  Matrix u(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) u.at(r, c) = cols[c][r];
  return u;
}

// A(h) = W2 tanh(W1 h), W1 = s*U, W2 = -(gamma/s)(U^T + noise). At the
// origin the step Jacobian of a residual update becomes I - lam_eff*gamma*I
// plus the noise term, so gamma directly sets the contraction strength.
MLPMap make_transition(int d_hid, double gamma, double noise_rel, std::mt19937_64& rng) {
  const double s = 0.5;
  Matrix u = random_orthogonal(d_hid, rng);

  MLPMap a;
  a.activation = Activation::kTanh;
  a.layers.resize(2);
  a.layers[0].weight = Matrix(d_hid, d_hid);
  a.layers[0].bias.assign(d_hid, 0.0);
  a.layers[1].weight = Matrix(d_hid, d_hid);
  a.layers[1].bias.assign(d_hid, 0.0);

  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const double noise_scale = noise_rel / std::sqrt(static_cast<double>(d_hid));
  for (int r = 0; r < d_hid; ++r) {
    for (int c = 0; c < d_hid; ++c) {
      a.layers[0].weight.at(r, c) = s * u.at(r, c);
      a.layers[1].weight.at(r, c) =
          -(gamma / s) * (u.at(c, r) + noise_scale * uni(rng));
    }
  }
  return a;
}

double transition_jacobian_norm_at_origin(const MLPMap& a) {
  MLPCache cache;
  Vec zero(a.dim_in(), 0.0);
  mlp_apply(a, zero, cache);
  return spectral_norm_estimate(
      [&](const Vec& v) { return mlp_jvp(a, cache, v); },
      [&](const Vec& v) {
        MLPGrad scratch = zeros_like(a);
        return mlp_vjp(a, cache, v, scratch);
      },
      a.dim_in());
}

}  // namespace

StepLinearization::StepLinearization(const Model& m, const Vec& h, const Vec& x, int t)
    : model_(&m), t_(t), dim_(m.dims.d_hid) {
  const OperatorSet& ops = m.ops_at(t);
  require_dim(h, static_cast<std::size_t>(dim_), "StepLinearization h");
  Vec a_out = mlp_apply(ops.a, h, a_cache_);
  with_identity_ = m.kind != ModelKind::kRecurrent;
  a_scale_ = m.kind == ModelKind::kFrost ? lambda_value(ops.scale) : 1.0;

  if (m.kind == ModelKind::kFrost && m.step_mode == StepMode::kGated) {
    ActValue g = activation_apply(Activation::kSigmoid, affine_apply(m.gate, h));
    gate_val_ = std::move(g.value);
    gate_deriv_ = std::move(g.deriv);
    update_ = add(a_out, affine_apply(ops.b, x));
    a_scale_ = 1.0;  // the gate replaces lambda in the update
  }
}

Vec StepLinearization::apply(const Vec& v) const {
  const OperatorSet& ops = model_->ops_at(t_);
  if (!gate_val_.empty()) {
    // J v = v + g .* (J_A v) + (u .* g') .* (W_g v)
    Vec jv = mlp_jvp(ops.a, a_cache_, v);
    Vec gv = matvec(model_->gate.weight, v);
    Vec out = v;
    for (int i = 0; i < dim_; ++i) {
      out[i] += gate_val_[i] * jv[i] + update_[i] * gate_deriv_[i] * gv[i];
    }
    return out;
  }
  Vec out = scaled(mlp_jvp(ops.a, a_cache_, v), a_scale_);
  if (with_identity_) axpy(1.0, v, out);
  return out;
}

Vec StepLinearization::apply_transpose(const Vec& v) const {
  const OperatorSet& ops = model_->ops_at(t_);
  if (!gate_val_.empty()) {
    Vec gu(dim_), au(dim_);
    for (int i = 0; i < dim_; ++i) {
      au[i] = gate_val_[i] * v[i];
      gu[i] = update_[i] * gate_deriv_[i] * v[i];
    }
    Vec out = mlp_vjp_input(ops.a, a_cache_, au);
    axpy(1.0, matvec_transpose(model_->gate.weight, gu), out);
    axpy(1.0, v, out);
    return out;
  }
  Vec out = scaled(mlp_vjp_input(ops.a, a_cache_, v), a_scale_);
  if (with_identity_) axpy(1.0, v, out);
  return out;
}

double step_jacobian_norm_at_origin(const Model& m, int t) {
  StepLinearization lin(m, Vec(m.dims.d_hid, 0.0), Vec(m.dims.d_in, 0.0), t);
  return spectral_norm_estimate(
      [&lin](const Vec& v) { return lin.apply(v); },
      [&lin](const Vec& v) { return lin.apply_transpose(v); }, m.dims.d_hid);
}

Model make_model(ModelKind kind, Dims dims, int t_max, std::uint64_t seed,
                 const InitOptions& opts) {
  if (dims.d_in < 1 || dims.d_hid < 1 || dims.d_out < 1) {
    throw ConfigError("make_model: dims must be positive");
  }
  if (t_max < 1) throw ConfigError("make_model: t_max must be >= 1");

  Model m;
  m.kind = kind;
  m.dims = dims;
  m.t_max = t_max;
  std::mt19937_64 rng(seed);

  const int copies = kind == ModelKind::kVanilla ? t_max : 1;
  m.ops.reserve(copies);
  for (int i = 0; i < copies; ++i) {
    OperatorSet ops;
    ops.scale = ScaleParameters{};
    const double lam_eff =
        kind == ModelKind::kFrost ? lambda_value(ops.scale) : 1.0;

    if (kind == ModelKind::kRecurrent) {
      // No residual skip, so plain rescaling of the output layer reaches
      // any target norm directly.
      std::mt19937_64 sub(rng());
      ops.a.activation = Activation::kTanh;
      ops.a.layers.push_back(affine_uniform_init(dims.d_hid, dims.d_hid, sub));
      ops.a.layers.push_back(affine_uniform_init(dims.d_hid, dims.d_hid, sub));
      const double est = transition_jacobian_norm_at_origin(ops.a);
      if (est > 0.0) {
        const double c = 0.95 * opts.target_step_norm / est;
        for (double& w : ops.a.layers[1].weight.data) w *= c;
      }
    } else {
      // Residual step: aim below the target so the noise term has room.
      double gamma = (1.0 - 0.7) / lam_eff;
      double noise = opts.output_noise;
      std::mt19937_64 sub(rng());
      for (int attempt = 0;; ++attempt) {
        std::mt19937_64 local = sub;
        ops.a = make_transition(dims.d_hid, gamma, noise, local);
        Model probe = m;
        probe.ops.assign(1, ops);
        probe.kind = kind == ModelKind::kVanilla ? ModelKind::kBasicSsm : kind;
        if (step_jacobian_norm_at_origin(probe, 0) <= opts.target_step_norm) break;
        if (attempt >= 40) {
          throw NumericError("make_model: could not reach contractive init");
        }
        if (attempt % 2 == 0 && noise > 1e-4) {
          noise *= 0.5;
        } else {
          gamma *= 1.1;
        }
      }
    }

    ops.b = affine_uniform_init(dims.d_hid, dims.d_in, rng);
    for (double& w : ops.b.weight.data) w *= opts.input_gain;
    ops.c = affine_uniform_init(dims.d_out, dims.d_hid, rng);
    ops.d = affine_uniform_init(dims.d_out, dims.d_in, rng);
    m.ops.push_back(std::move(ops));
  }

  m.gate = affine_uniform_init(dims.d_hid, dims.d_hid, rng);
  return m;
}

}  // namespace frost
