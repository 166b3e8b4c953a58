#pragma once

// Run configuration: flat key=value text with dotted keys for nesting.
// Unknown keys are rejected. to_text() writes every key, so its output
// reproduces the run exactly when fed back in.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "soup/numerics.hpp"
#include "soup/objective.hpp"
#include "soup/policy.hpp"
#include "soup/rollout.hpp"
#include "soup/tasks.hpp"

namespace soup {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Algorithm { on_policy, soup };

std::string_view algorithm_name(Algorithm a);

struct MiniBatchConfig {
  bool enabled = false;
  std::size_t minibatch_size = 32;  // prompts per optimizer update
  std::size_t gather_size = 32;     // prompts rolled out per step when enabled
};

struct TaskConfig {
  TaskSpec spec;
  std::size_t eval_size = 200;
  std::uint64_t split_seed = 20251;
};

/// Accepted for compatibility with the usual RL config surface; enabling
/// any of them is a configuration error.
struct KlConfig {
  bool use_kl_loss = false;
  double kl_loss_coeff = 0.0;
  bool use_kl_in_reward = false;
  double kl_coeff = 0.0;
};

struct TrainConfig {
  Algorithm algorithm = Algorithm::soup;
  std::size_t group_size = 8;  // G
  std::size_t batch_size = 32;
  std::size_t refresh_interval = 8;  // T
  TruncationStrategy strategy;
  ClipConfig clip;
  OptimConfig optim;
  MiniBatchConfig mini_batch;
  std::size_t max_resp_len = 64;
  double temperature = 1.0;
  double eval_temperature = 0.6;
  std::size_t eval_k = 32;
  std::size_t total_steps = 200;
  std::uint64_t seed = 1;
  bool filter_groups = false;
  std::size_t max_regen_batches = 10;
  double epsilon_std = 1e-6;
  std::size_t checkpoint_every = 25;
  bool dump_trajectories = false;
  double init_scale = 0.08;
  int window = 8;
  int embed_dim = 16;
  int hidden_dim = 64;
  TaskConfig task;
  KlConfig kl;

  void validate() const;
  PolicyArchitecture architecture() const;
  RolloutSettings rollout_settings() const;
  ObjectiveSettings objective_settings() const;
};

/// All recognised keys, in the order to_text() writes them.
std::vector<std::string> config_keys();

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const TrainConfig& cfg, std::string_view key);

/// Parses "key=value" lines; '#' starts a comment.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Applies "key=value"; throws ConfigError on a malformed or unknown override.
void apply_override(TrainConfig& cfg, std::string_view assignment);

std::string to_text(const TrainConfig& cfg);

/// Named presets: "default", "desk_minibatch" (gather 8x minibatch),
/// "paper_minibatch" (minibatch 32, gather 512), "paper_scale" (paper
/// learning rate and response length).
TrainConfig preset(std::string_view name);
std::vector<std::string> preset_names();

}  // namespace soup
