#pragma once

#include "frost/analysis.hpp"
#include "frost/io.hpp"

namespace frost {

struct RunConfig {
  std::string model_kind = "frost";
  Dims dims{16, 32, 4};
  int t_max = 16;
  bool gated = false;
  TrainingConfig training;
  double q = 0.5;
  int t_min = 1;
  std::vector<double> q_grid = {0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0};
  DatasetSpec dataset;
  int train_samples = 2000;
  int kll_k = 200;
  bool reset_sketch_per_epoch = false;
  bool ablation = false;
  std::string output_dir = "out";
  std::uint64_t seed = 42;

  void validate() const;
};

// JSON round-trip with explicit defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);

HaltingHead make_halting_head(int d_hid, std::uint64_t seed);

struct QuantileRow {
  double q = 0.0;
  double s_halt = 0.0;
  double mean_depth = 0.0;
  double accuracy = 0.0;
};

// Full pipeline: dataset, training, threshold calibration, q-grid adaptive
// evaluation, cosine profile, latent dimension estimate, artifact emission.
// Returns the JSON summary that was written to <output_dir>/summary.json.
nlohmann::json run_experiment(const RunConfig& cfg);

// Adaptive q-grid evaluation of an existing checkpoint against the config's
// synthetic eval split. Writes quantile_sweep.csv and returns the rows.
std::vector<QuantileRow> evaluate_checkpoint(const RunConfig& cfg, const Checkpoint& ckpt);

// Analysis-only pass over a checkpoint: contraction, error decay, gradient
// bound, scaling identities, cosine profile, and latent dimension estimate.
nlohmann::json analyze_checkpoint(const RunConfig& cfg, const Checkpoint& ckpt);

// Property suites (numerics oracles, sketch rank error, Appendix-style
// contraction/decay/gradient runs, scaling identities, Koch dimension,
// lambda positivity). Writes one JSON report per suite plus a summary;
// returns 0 when everything passes, 3 otherwise.
int verify(const RunConfig& cfg);

// Measured rank error across k values; the error must shrink as k grows.
nlohmann::json sketch_bench(const RunConfig& cfg, const std::vector<int>& ks);

// True iff every value is strictly positive; the positivity suite feeds it
// both real lambda trajectories and an injected negative control.
bool positivity_check(const std::vector<double>& lambdas);

}  // namespace frost
