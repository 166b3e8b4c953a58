#pragma once

// Trajectory generation. A mixed-policy trajectory keeps a truncated
// prefix sampled from a frozen behavior snapshot and lets the current
// policy continue from there. Every token carries the log-probability it
// had under the policy that actually produced it, which is what the
// objective later divides by.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "soup/policy.hpp"
#include "soup/rng.hpp"
#include "soup/tasks.hpp"

namespace soup {

enum class Provenance : std::uint8_t { offpolicy_prefix, onpolicy_suffix };

struct Trajectory {
  std::vector<TokenId> prompt;
  std::vector<TokenId> tokens;
  std::vector<double> gen_logprob;
  std::vector<double> gen_entropy;
  std::vector<Provenance> provenance;
  std::size_t truncation_index = 0;  // number of off-policy prefix tokens

  std::size_t size() const { return tokens.size(); }

  /// Throws std::logic_error if any structural invariant is violated.
  void validate(TokenId eos) const;
};

struct GroupRollout {
  Instance instance;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
};

enum class TruncationKind { length_ratio, entropy_topk };

std::string_view truncation_kind_name(TruncationKind kind);
TruncationKind parse_truncation_kind(std::string_view name);

struct TruncationStrategy {
  TruncationKind kind = TruncationKind::length_ratio;
  double ratio = 0.5;              // length_ratio
  int k = 32;                      // entropy_topk
  std::size_t prefix_budget = 0;   // length_ratio only; 0 = off

  void validate() const;
};

enum class RolloutMode { on_policy, soup };

std::string_view rollout_mode_name(RolloutMode mode);

struct GeneratedSegment {
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;
  std::vector<double> entropies;
};

/// Extends prompt ++ prefix until EOS or until the response (prefix
/// included) reaches max_len tokens. Only the new tokens are returned.
GeneratedSegment generate_sequence(const ParamVector& params, const PolicyArchitecture& arch,
                                   std::span<const TokenId> prompt,
                                   std::span<const TokenId> prefix, std::size_t max_len,
                                   double temperature, TokenId eos, Rng& rng);

/// Number of tokens kept: round-half-up(len * ratio), clamped to
/// [0, len - 1], never ending on EOS.
std::size_t truncate_length_ratio(std::span<const TokenId> tokens, double ratio,
                                  TokenId eos);

/// Draws one of the k highest-entropy positions (ties to the earlier
/// position) and keeps the tokens strictly before it.
std::size_t truncate_entropy_topk(std::span<const TokenId> tokens,
                                  std::span<const double> gen_entropy, int k, TokenId eos,
                                  Rng& rng);

Trajectory build_soup_trajectory(const ParamVector& behavior_params,
                                 const ParamVector& current_params,
                                 const PolicyArchitecture& arch, const Instance& instance,
                                 const TruncationStrategy& strategy, std::size_t max_len,
                                 double temperature, TokenId eos, Rng& rng);

Trajectory build_onpolicy_trajectory(const ParamVector& current_params,
                                     const PolicyArchitecture& arch, const Instance& instance,
                                     std::size_t max_len, double temperature, TokenId eos,
                                     Rng& rng);

struct RolloutSettings {
  std::size_t group_size = 8;
  TruncationStrategy strategy;
  std::size_t max_len = 64;
  double temperature = 1.0;
};

/// G trajectories for one instance. Trajectory i draws from
/// rng.derive("trajectory", i); on-policy sampling and the suffix phase of
/// a mixed trajectory share the "policy" sub-stream.
GroupRollout rollout_group(const Instance& instance, RolloutMode mode,
                           const ParamVector& behavior_params,
                           const ParamVector& current_params, const PolicyArchitecture& arch,
                           const RolloutSettings& settings, const Rng& rng);

}  // namespace soup
