#pragma once

// Group-relative advantages, per-token importance ratios against the
// stored generation log-probs, and the clipped token-mean surrogate.
//
// The ratio for every token is exp(current - stored). Prefix tokens were
// stored under the behavior snapshot and suffix tokens under the reference
// snapshot, so one expression covers both cases; the rollout module is what
// guarantees the stored values came from the right policy and context.

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "soup/numerics.hpp"
#include "soup/policy.hpp"
#include "soup/rollout.hpp"

namespace soup {

/// Raised when filtering leaves nothing to train on.
class EmptyBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdvantageSet {
  std::vector<double> advantages;
  double group_mean = 0.0;
  double group_std = 0.0;
  bool degenerate = false;
};

struct ClipConfig {
  double eps_low = 0.2;
  double eps_high = 0.28;

  void validate() const;
};

struct TokenContribution {
  double ratio = 1.0;
  double advantage = 0.0;
  double objective_value = 0.0;
  bool clipped_active = false;
  double grad_weight = 0.0;  // ratio * advantage unless clipped
};

/// (R - mean) / std with the population std; all zeros when std < epsilon_std.
AdvantageSet group_advantages(std::span<const double> rewards, double epsilon_std);

/// Keep iff 0 < #correct < G.
bool group_filter(std::span<const double> rewards, std::size_t group_size);

double token_importance_ratio(double current_logprob, double stored_gen_logprob);

TokenContribution clipped_token_objective(double ratio, double advantage, const ClipConfig& clip);

/// floor(10 t / len), clamped to 9.
std::size_t position_decile(std::size_t position, std::size_t length);

struct ClipStats {
  std::size_t prefix_tokens = 0;
  std::size_t prefix_clipped = 0;
  std::size_t suffix_tokens = 0;
  std::size_t suffix_clipped = 0;
  std::array<std::size_t, 10> decile_tokens{};
  std::array<std::size_t, 10> decile_clipped{};
  std::array<double, 10> decile_entropy_sum{};  // current-policy entropy
  double max_suffix_ratio_deviation = 0.0;      // max |r - 1| over suffix tokens

  std::size_t total_tokens() const { return prefix_tokens + suffix_tokens; }
  std::size_t clipped_tokens() const { return prefix_clipped + suffix_clipped; }
  double clip_fraction() const;
  double prefix_clip_fraction() const;
  double suffix_clip_fraction() const;

  void merge(const ClipStats& other);
};

struct TrajectoryTerms {
  std::vector<TokenContribution> tokens;
  std::vector<double> current_logprob;
  std::vector<double> current_entropy;
  std::vector<double> weights;  // descent weights fed to the policy gradient
};

struct BatchObjective {
  double objective = 0.0;
  double loss = 0.0;
  std::size_t token_count = 0;  // normaliser: sum of kept |o_i|
  std::vector<bool> kept;       // per group
  std::vector<AdvantageSet> advantages;
  std::vector<std::vector<TrajectoryTerms>> terms;  // [group][trajectory]
  ClipStats stats;
};

struct ObjectiveSettings {
  ClipConfig clip;
  double epsilon_std = 1e-6;
  double temperature = 1.0;
  bool filter_groups = false;
};

/// Token-mean clipped surrogate over every kept token in the batch.
/// Throws EmptyBatchError when filtering keeps no group.
BatchObjective batch_objective(std::span<const GroupRollout> groups, const ParamVector& params,
                               const PolicyArchitecture& arch, const ObjectiveSettings& settings);

/// Sums the policy gradient of each trajectory with its descent weights,
/// in group then trajectory order.
ParamVector assemble_gradient(std::span<const GroupRollout> groups, const ParamVector& params,
                              const PolicyArchitecture& arch, const BatchObjective& objective,
                              double temperature);

/// Gradient of batch_objective(...).loss with respect to params.
ParamVector surrogate_gradient(std::span<const GroupRollout> groups, const ParamVector& params,
                               const PolicyArchitecture& arch, const ObjectiveSettings& settings);

}  // namespace soup
