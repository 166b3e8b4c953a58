#include "soup/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace soup {

void Trajectory::validate(TokenId eos) const {
  const std::size_t n = tokens.size();
  if (gen_logprob.size() != n || gen_entropy.size() != n || provenance.size() != n) {
    throw std::logic_error("trajectory vectors differ in length");
  }
  if (n > 0 && truncation_index >= n) {
    throw std::logic_error("truncation index must leave at least one on-policy token");
  }
  for (std::size_t t = 0; t < n; ++t) {
    const bool prefix = t < truncation_index;
    if ((provenance[t] == Provenance::offpolicy_prefix) != prefix) {
      throw std::logic_error("provenance flags disagree with truncation index");
    }
    if (!(gen_logprob[t] <= 0.0)) throw std::logic_error("generation log-prob above zero");
    if (tokens[t] == eos && t + 1 != n) throw std::logic_error("EOS before the final token");
  }
}

std::string_view truncation_kind_name(TruncationKind kind) {
  return kind == TruncationKind::length_ratio ? "length_ratio" : "entropy_topk";
}

TruncationKind parse_truncation_kind(std::string_view name) {
  if (name == "length_ratio" || name == "LENGTH_RATIO") return TruncationKind::length_ratio;
  if (name == "entropy_topk" || name == "ENTROPY_TOPK") return TruncationKind::entropy_topk;
  throw std::invalid_argument("unknown truncation strategy '" + std::string(name) + "'");
}

void TruncationStrategy::validate() const {
  if (kind == TruncationKind::length_ratio && !(ratio >= 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("strategy.ratio must be in [0, 1]");
  }
  if (kind == TruncationKind::entropy_topk && k < 1) {
    throw std::invalid_argument("strategy.k must be at least 1");
  }
}

std::string_view rollout_mode_name(RolloutMode mode) {
  return mode == RolloutMode::on_policy ? "on_policy" : "soup";
}

GeneratedSegment generate_sequence(const ParamVector& params, const PolicyArchitecture& arch,
                                   std::span<const TokenId> prompt,
                                   std::span<const TokenId> prefix, std::size_t max_len,
                                   double temperature, TokenId eos, Rng& rng) {
  if (prefix.size() >= max_len) {
    throw std::invalid_argument("prefix must be shorter than max_len");
  }
  std::vector<TokenId> history(prompt.begin(), prompt.end());
  history.insert(history.end(), prefix.begin(), prefix.end());
  GeneratedSegment out;
  for (std::size_t len = prefix.size(); len < max_len; ++len) {
    const auto dist = next_token_distribution(params, arch, history, temperature);
    const TokenId tok = sample_token(dist, rng);
    out.tokens.push_back(tok);
    out.logprobs.push_back(dist.log_prob(tok));
    out.entropies.push_back(token_entropy(dist));
    history.push_back(tok);
    if (tok == eos) break;
  }
  return out;
}

namespace {

std::size_t finalize_cut(std::span<const TokenId> tokens, std::size_t n, TokenId eos) {
  if (tokens.empty()) return 0;
  n = std::min(n, tokens.size() - 1);
  if (n > 0 && tokens[n - 1] == eos) --n;
  return n;
}

}  // namespace

std::size_t truncate_length_ratio(std::span<const TokenId> tokens, double ratio, TokenId eos) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("ratio must be in [0, 1]");
  const double scaled = static_cast<double>(tokens.size()) * ratio;
  const auto n = static_cast<std::size_t>(std::floor(scaled + 0.5));
  return finalize_cut(tokens, n, eos);
}

std::size_t truncate_entropy_topk(std::span<const TokenId> tokens,
                                  std::span<const double> gen_entropy, int k, TokenId eos,
                                  Rng& rng) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (gen_entropy.size() != tokens.size()) {
    throw std::invalid_argument("entropy count does not match token count");
  }
  if (tokens.empty()) return 0;
  std::vector<std::size_t> order(tokens.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return gen_entropy[a] > gen_entropy[b];
  });
  const std::size_t top = std::min(static_cast<std::size_t>(k), tokens.size());
  const std::size_t p = order[rng.below(top)];
  return finalize_cut(tokens, p, eos);
}

namespace {

void append_segment(Trajectory& traj, const GeneratedSegment& seg, std::size_t count,
                    Provenance prov) {
  traj.tokens.insert(traj.tokens.end(), seg.tokens.begin(),
                     seg.tokens.begin() + static_cast<std::ptrdiff_t>(count));
  traj.gen_logprob.insert(traj.gen_logprob.end(), seg.logprobs.begin(),
                          seg.logprobs.begin() + static_cast<std::ptrdiff_t>(count));
  traj.gen_entropy.insert(traj.gen_entropy.end(), seg.entropies.begin(),
                          seg.entropies.begin() + static_cast<std::ptrdiff_t>(count));
  traj.provenance.insert(traj.provenance.end(), count, prov);
}

}  // namespace

Trajectory build_onpolicy_trajectory(const ParamVector& current_params,
                                     const PolicyArchitecture& arch, const Instance& instance,
                                     std::size_t max_len, double temperature, TokenId eos,
                                     Rng& rng) {
  Rng policy_rng = rng.derive("policy");
  const auto seg = generate_sequence(current_params, arch, instance.prompt, {}, max_len,
                                     temperature, eos, policy_rng);
  Trajectory traj;
  traj.prompt = instance.prompt;
  append_segment(traj, seg, seg.tokens.size(), Provenance::onpolicy_suffix);
  return traj;
}

Trajectory build_soup_trajectory(const ParamVector& behavior_params,
                                 const ParamVector& current_params,
                                 const PolicyArchitecture& arch, const Instance& instance,
                                 const TruncationStrategy& strategy, std::size_t max_len,
                                 double temperature, TokenId eos, Rng& rng) {
  strategy.validate();
  if (behavior_params.size() != current_params.size()) {
    throw std::invalid_argument("behavior and current parameters differ in shape");
  }
  Rng behavior_rng = rng.derive("behavior");
  Rng truncate_rng = rng.derive("truncate");
  Rng policy_rng = rng.derive("policy");

  // Behavior phase. With a prefix budget only the budget is decoded and
  // the whole (EOS-free) result becomes the prefix.
  const bool budgeted =
      strategy.kind == TruncationKind::length_ratio && strategy.prefix_budget > 0;
  const std::size_t behavior_len =
      budgeted ? std::min(strategy.prefix_budget, max_len - 1) : max_len;
  GeneratedSegment behavior;
  if (behavior_len > 0) {
    behavior = generate_sequence(behavior_params, arch, instance.prompt, {}, behavior_len,
                                 temperature, eos, behavior_rng);
  }

  std::size_t keep = 0;
  if (budgeted) {
    keep = behavior.tokens.size();
    if (keep > 0 && behavior.tokens.back() == eos) --keep;
  } else if (strategy.kind == TruncationKind::length_ratio) {
    keep = truncate_length_ratio(behavior.tokens, strategy.ratio, eos);
  } else {
    keep = truncate_entropy_topk(behavior.tokens, behavior.entropies, strategy.k, eos,
                                 truncate_rng);
  }

  Trajectory traj;
  traj.prompt = instance.prompt;
  append_segment(traj, behavior, keep, Provenance::offpolicy_prefix);
  traj.truncation_index = keep;

  const auto suffix = generate_sequence(current_params, arch, instance.prompt, traj.tokens,
                                        max_len, temperature, eos, policy_rng);
  append_segment(traj, suffix, suffix.tokens.size(), Provenance::onpolicy_suffix);
  return traj;
}

GroupRollout rollout_group(const Instance& instance, RolloutMode mode,
                           const ParamVector& behavior_params,
                           const ParamVector& current_params, const PolicyArchitecture& arch,
                           const RolloutSettings& settings, const Rng& rng) {
  if (settings.group_size < 2) throw std::invalid_argument("group size must be at least 2");
  const TokenId eos = Vocabulary::digits().eos;
  GroupRollout group;
  group.instance = instance;
  group.trajectories.reserve(settings.group_size);
  group.rewards.reserve(settings.group_size);
  for (std::size_t i = 0; i < settings.group_size; ++i) {
    Rng traj_rng = rng.derive("trajectory", i);
    Trajectory traj =
        mode == RolloutMode::on_policy
            ? build_onpolicy_trajectory(current_params, arch, instance, settings.max_len,
                                        settings.temperature, eos, traj_rng)
            : build_soup_trajectory(behavior_params, current_params, arch, instance,
                                    settings.strategy, settings.max_len, settings.temperature,
                                    eos, traj_rng);
    group.rewards.push_back(reward(instance.answer, traj.tokens));
    group.trajectories.push_back(std::move(traj));
  }
  return group;
}

}  // namespace soup
