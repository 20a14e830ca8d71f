#pragma once

#include <limits>

#include "frost/dynamics.hpp"
#include "frost/sketch.hpp"

namespace frost {

// Linear halting head: s = sigmoid(w_s . h + b_s).
struct HaltingHead {
  Vec w_s;
  double b_s = 0.0;
};

double halting_score(const HaltingHead& head, const Vec& h);
ScoreFn make_score_fn(const HaltingHead& head);

// One (sample, iteration) entry of the jointly ranked batch-time loss set.
// Ranks are 1..B*T, ascending by loss, ties broken by (sample, iteration).
struct RankRecord {
  int sample = 0;
  int iteration = 0;  // 1-based step index
  double loss = 0.0;
  int rank = 0;
};

// losses[i][t-1] is the loss of sample i at iteration t.
std::vector<RankRecord> batch_time_rank(const std::vector<std::vector<double>>& losses);

struct EasyHardSplit {
  std::vector<int> easy;
  std::vector<int> hard;
  int k_split = 0;
};

// Per-sample difficulty is the mean rank across that sample's iterations;
// the k_split lowest-mean samples form E, the k_split highest form H.
// Ties resolve by sample index.
EasyHardSplit split_easy_hard(const std::vector<RankRecord>& records, int batch_size,
                              int k_split);

struct HaltingPolicy {
  double q = 0.5;  // target quantile in (0, 1]
  KllSketch sketch;
  int t_min = 1;
  int t_max = 16;
  double s_halt = std::numeric_limits<double>::quiet_NaN();

  bool calibrated() const { return std::isfinite(s_halt); }
};

// s_halt = sketch quantile at policy.q; stored on the policy and returned.
double calibrate_threshold(HaltingPolicy& policy);

struct AdaptiveResult {
  Vec output;
  int depth = 0;
  bool halted_early = false;
  Trajectory trajectory;
};

// Iterates the model's step rule; from t_min on, halts at the first step
// whose score reaches the calibrated threshold (inclusive), otherwise runs
// to t_max. The returned output is the readout at the stopping step.
AdaptiveResult adaptive_unroll(const Model& model, const Vec& x, const HaltingHead& head,
                               const HaltingPolicy& policy);

}  // namespace frost
