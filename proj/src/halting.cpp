#include "frost/halting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace frost {

double halting_score(const HaltingHead& head, const Vec& h) {
  if (h.size() != head.w_s.size()) {
    throw ShapeError("halting_score: state dim " + std::to_string(h.size()) +
                     " does not match head dim " + std::to_string(head.w_s.size()));
  }
  return sigmoid(dot(head.w_s, h) + head.b_s);
}

ScoreFn make_score_fn(const HaltingHead& head) {
  return [&head](const Vec& h) { return halting_score(head, h); };
}

std::vector<RankRecord> batch_time_rank(const std::vector<std::vector<double>>& losses) {
  std::vector<RankRecord> records;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    for (std::size_t t = 0; t < losses[i].size(); ++t) {
      const double l = losses[i][t];
      if (!std::isfinite(l)) {
        throw NumericError("batch_time_rank: non-finite loss at sample " +
                           std::to_string(i) + ", iteration " + std::to_string(t + 1));
      }
      records.push_back({static_cast<int>(i), static_cast<int>(t + 1), l, 0});
    }
  }
  // Stable order on ties: (sample, iteration) ascending.
  std::vector<int> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&records](int a, int b) {
    if (records[a].loss != records[b].loss) return records[a].loss < records[b].loss;
    if (records[a].sample != records[b].sample) return records[a].sample < records[b].sample;
    return records[a].iteration < records[b].iteration;
  });
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    records[order[pos]].rank = static_cast<int>(pos) + 1;
  }
  return records;
}

EasyHardSplit split_easy_hard(const std::vector<RankRecord>& records, int batch_size,
                              int k_split) {
  if (k_split < 1) throw ConfigError("split_easy_hard: k_split must be >= 1");
  if (2 * k_split > batch_size) {
    throw ConfigError("split_easy_hard: 2*k_split = " + std::to_string(2 * k_split) +
                      " exceeds batch size " + std::to_string(batch_size));
  }
  std::vector<double> mean_rank(batch_size, 0.0);
  std::vector<int> count(batch_size, 0);
  for (const auto& r : records) {
    if (r.sample < 0 || r.sample >= batch_size) {
      throw ConfigError("split_easy_hard: sample index out of range");
    }
    mean_rank[r.sample] += r.rank;
    ++count[r.sample];
  }
  for (int i = 0; i < batch_size; ++i) {
    if (count[i] == 0) throw ConfigError("split_easy_hard: sample without records");
    mean_rank[i] /= count[i];
  }
  std::vector<int> order(batch_size);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&mean_rank](int a, int b) {
    if (mean_rank[a] != mean_rank[b]) return mean_rank[a] < mean_rank[b];
    return a < b;
  });

  EasyHardSplit split;
  split.k_split = k_split;
  split.easy.assign(order.begin(), order.begin() + k_split);
  split.hard.assign(order.end() - k_split, order.end());
  std::sort(split.easy.begin(), split.easy.end());
  std::sort(split.hard.begin(), split.hard.end());
  return split;
}

double calibrate_threshold(HaltingPolicy& policy) {
  if (policy.sketch.empty()) {
    throw ConfigError("calibrate_threshold: empty score sketch");
  }
  policy.s_halt = policy.sketch.query(policy.q);
  return policy.s_halt;
}

AdaptiveResult adaptive_unroll(const Model& model, const Vec& x, const HaltingHead& head,
                               const HaltingPolicy& policy) {
  if (!policy.calibrated()) {
    throw ConfigError("adaptive_unroll: threshold not calibrated");
  }
  if (policy.t_min < 1 || policy.t_min > policy.t_max) {
    throw ConfigError("adaptive_unroll: need 1 <= t_min <= t_max");
  }

  AdaptiveResult result;
  Trajectory& traj = result.trajectory;
  traj.input = x;
  traj.states.emplace_back(model.dims.d_hid, 0.0);
  for (int t = 1; t <= policy.t_max; ++t) {
    Vec h = model_step(model, traj.states.back(), x, t - 1);
    if (!all_finite(h)) {
      throw NumericError("adaptive_unroll: non-finite state at step " + std::to_string(t));
    }
    const double s = halting_score(head, h);
    traj.outputs.push_back(model_readout(model, h, x, t - 1));
    traj.scores.push_back(s);
    traj.states.push_back(std::move(h));
    if (t >= policy.t_min && s >= policy.s_halt) {
      result.depth = t;
      result.halted_early = t < policy.t_max;
      result.output = traj.outputs.back();
      return result;
    }
  }
  result.depth = policy.t_max;
  result.halted_early = false;
  result.output = traj.outputs.back();
  return result;
}

}  // namespace frost
