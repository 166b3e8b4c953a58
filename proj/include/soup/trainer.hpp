#pragma once

// Training loop with a periodically refreshed behavior snapshot.
//
// A cycle is T batches long. The first batch of each cycle is sampled
// entirely on-policy (the behavior snapshot equals the current policy at
// that point); batches 2..T build mixed trajectories from the frozen
// snapshot. After the T-th update the snapshot is replaced by the current
// parameters.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "soup/config.hpp"
#include "soup/eval.hpp"
#include "soup/numerics.hpp"
#include "soup/objective.hpp"
#include "soup/rng.hpp"
#include "soup/rollout.hpp"

namespace soup {

struct CycleState {
  ParamVector behavior_params;
  std::size_t batch_in_cycle = 1;  // in [1, T]
  std::int64_t global_step = 0;
};

struct TrainerState {
  ParamVector params;
  OptimizerState optimizer;
  CycleState cycle;
};

struct MetricsRecord {
  std::int64_t step = 0;
  std::string mode;
  double mean_reward = 0.0;
  double loss = 0.0;
  double clip_frac = 0.0;
  double clip_frac_prefix = 0.0;
  double clip_frac_suffix = 0.0;
  std::array<double, 10> entropy_decile{};  // NaN for empty deciles
  std::array<double, 10> clip_decile{};     // NaN for empty deciles
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping; mean over updates in the step
  double mean_entropy = 0.0;
  double max_onpolicy_ratio_dev = 0.0;
  double mean_response_len = 0.0;
  std::size_t tokens = 0;
  std::size_t clipped_tokens = 0;
  std::size_t groups = 0;
  std::size_t regen_rounds = 0;
  std::size_t updates = 0;

  /// One JSON object; NaN deciles are written as null.
  std::string to_json_line() const;
  static MetricsRecord from_json_line(const std::string& line);
};

/// Everything an observer can look at after one optimizer update.
struct UpdateView {
  std::int64_t step;
  RolloutMode mode;
  std::size_t minibatch_index;
  std::span<const GroupRollout> groups;
  const BatchObjective& objective;
};

using UpdateObserver = std::function<void(const UpdateView&)>;

/// Fresh parameters from the seed, zero optimizer state, behavior snapshot
/// equal to the initial parameters.
TrainerState init_trainer(const TrainConfig& cfg);

RolloutMode mode_for(const TrainConfig& cfg, const CycleState& cycle);

/// Snapshots current_params as the new behavior policy and restarts the cycle.
void refresh_behavior(CycleState& state, const ParamVector& current_params);

/// Samples `prompt_count` prompts for this step and rolls them out. With
/// filter_groups on, groups whose answers are all right or all wrong are
/// dropped and fresh prompts sampled, for at most max_regen_batches rounds.
/// Throws EmptyBatchError when nothing survives.
std::vector<GroupRollout> collect_groups(const TrainConfig& cfg, const CycleState& cycle,
                                         const ParamVector& reference_params, RolloutMode mode,
                                         std::size_t prompt_count, const Rng& step_rng,
                                         std::size_t* rounds_used = nullptr);

struct UpdateSummary {
  std::size_t updates = 0;
  double loss_sum = 0.0;
  double grad_norm_sum = 0.0;
  double first_lr = 0.0;
  ClipStats stats;
};

/// One clipped AdamW update on the surrogate gradient of `groups`.
UpdateSummary apply_update(std::span<const GroupRollout> groups, ParamVector& params,
                           OptimizerState& optimizer, const TrainConfig& cfg,
                           const UpdateObserver& observer = {}, std::int64_t step = 0,
                           RolloutMode mode = RolloutMode::on_policy,
                           std::size_t minibatch_index = 0);

/// Splits gathered groups into minibatches of minibatch_size prompts and
/// updates sequentially. Stored generation log-probs stay fixed, so ratios
/// drift from 1 after the first minibatch.
UpdateSummary mini_batch_update(std::span<const GroupRollout> gathered, ParamVector& params,
                                OptimizerState& optimizer, const TrainConfig& cfg,
                                const UpdateObserver& observer = {}, std::int64_t step = 0,
                                RolloutMode mode = RolloutMode::on_policy);

/// Rollout, update(s), metrics, then advances the cycle.
MetricsRecord train_step(TrainerState& state, const TrainConfig& cfg, const Rng& run_rng,
                         const UpdateObserver& observer = {});

struct RunResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path metrics_log;
  std::vector<CheckpointScore> scores;
  std::vector<std::filesystem::path> checkpoints;  // parallel to scores
  TrainerState final_state;
  std::vector<MetricsRecord> metrics;
};

/// Runs total_steps steps, writing under output_dir:
///   effective.cfg, eval_set.txt, metrics.log, checkpoints/step_NNNNNN.ckpt,
///   checkpoints/index.jsonl (held-out avg@eval_k per checkpoint),
///   checkpoints/best.ckpt and, when enabled, trajectories.jsonl.
RunResult run_training(const TrainConfig& cfg, const std::filesystem::path& output_dir,
                       const UpdateObserver& observer = {});

std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path);

}  // namespace soup
