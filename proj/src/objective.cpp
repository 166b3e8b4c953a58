#include "soup/objective.hpp"

#include <algorithm>
#include <cmath>

namespace soup {

void ClipConfig::validate() const {
  if (!(eps_low > 0.0) || !(eps_high > 0.0)) {
    throw std::invalid_argument("clip bounds must be positive");
  }
}

AdvantageSet group_advantages(std::span<const double> rewards, double epsilon_std) {
  if (rewards.size() < 2) throw std::invalid_argument("advantages need at least 2 rewards");
  if (!(epsilon_std > 0.0)) throw std::invalid_argument("epsilon_std must be positive");
  const auto n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;

  AdvantageSet out;
  out.group_mean = mean;
  out.group_std = std::sqrt(var);
  out.advantages.assign(rewards.size(), 0.0);
  out.degenerate = out.group_std < epsilon_std;
  if (!out.degenerate) {
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      out.advantages[i] = (rewards[i] - mean) / out.group_std;
    }
  }
  return out;
}

bool group_filter(std::span<const double> rewards, std::size_t group_size) {
  if (rewards.size() != group_size) throw std::invalid_argument("reward count differs from G");
  const auto correct = std::count(rewards.begin(), rewards.end(), 1.0);
  return correct > 0 && static_cast<std::size_t>(correct) < group_size;
}

double token_importance_ratio(double current_logprob, double stored_gen_logprob) {
  return std::exp(current_logprob - stored_gen_logprob);
}

TokenContribution clipped_token_objective(double ratio, double advantage,
                                          const ClipConfig& clip) {
  if (!(ratio > 0.0)) throw std::invalid_argument("importance ratio must be positive");
  TokenContribution c;
  c.ratio = ratio;
  c.advantage = advantage;
  const double clamped = std::clamp(ratio, 1.0 - clip.eps_low, 1.0 + clip.eps_high);
  const double plain = ratio * advantage;
  const double bounded = clamped * advantage;
  c.objective_value = std::min(plain, bounded);
  c.clipped_active = bounded < plain && clamped != ratio;
  c.grad_weight = c.clipped_active ? 0.0 : plain;
  return c;
}

std::size_t position_decile(std::size_t position, std::size_t length) {
  if (length == 0) throw std::invalid_argument("length must be positive");
  return std::min<std::size_t>(9, (10 * position) / length);
}

double ClipStats::clip_fraction() const {
  const auto n = total_tokens();
  return n == 0 ? 0.0 : static_cast<double>(clipped_tokens()) / static_cast<double>(n);
}

double ClipStats::prefix_clip_fraction() const {
  return prefix_tokens == 0
             ? 0.0
             : static_cast<double>(prefix_clipped) / static_cast<double>(prefix_tokens);
}

double ClipStats::suffix_clip_fraction() const {
  return suffix_tokens == 0
             ? 0.0
             : static_cast<double>(suffix_clipped) / static_cast<double>(suffix_tokens);
}

void ClipStats::merge(const ClipStats& o) {
  prefix_tokens += o.prefix_tokens;
  prefix_clipped += o.prefix_clipped;
  suffix_tokens += o.suffix_tokens;
  suffix_clipped += o.suffix_clipped;
  for (std::size_t b = 0; b < 10; ++b) {
    decile_tokens[b] += o.decile_tokens[b];
    decile_clipped[b] += o.decile_clipped[b];
    decile_entropy_sum[b] += o.decile_entropy_sum[b];
  }
  max_suffix_ratio_deviation = std::max(max_suffix_ratio_deviation, o.max_suffix_ratio_deviation);
}

BatchObjective batch_objective(std::span<const GroupRollout> groups, const ParamVector& params,
                               const PolicyArchitecture& arch,
                               const ObjectiveSettings& settings) {
  settings.clip.validate();
  BatchObjective out;
  out.kept.resize(groups.size(), false);
  out.advantages.resize(groups.size());
  out.terms.resize(groups.size());

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    if (group.rewards.size() != group.trajectories.size()) {
      throw std::invalid_argument("group rewards and trajectories differ in count");
    }
    out.advantages[g] = group_advantages(group.rewards, settings.epsilon_std);
    out.kept[g] = !settings.filter_groups || group_filter(group.rewards, group.rewards.size());
    if (!out.kept[g]) continue;
    for (const auto& traj : group.trajectories) out.token_count += traj.size();
  }
  if (std::none_of(out.kept.begin(), out.kept.end(), [](bool k) { return k; })) {
    throw EmptyBatchError("every group was filtered out; resample the batch");
  }
  if (out.token_count == 0) throw EmptyBatchError("kept groups contain no tokens");
  const auto normaliser = static_cast<double>(out.token_count);

  double total = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (!out.kept[g]) continue;
    const auto& group = groups[g];
    auto& group_terms = out.terms[g];
    group_terms.resize(group.trajectories.size());
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const auto& traj = group.trajectories[i];
      auto& terms = group_terms[i];
      const std::size_t len = traj.size();
      terms.tokens.resize(len);
      terms.weights.assign(len, 0.0);
      if (len == 0) continue;
      const double adv = out.advantages[g].advantages[i];
      auto stats = sequence_stats(params, arch, traj.prompt, traj.tokens, settings.temperature);
      terms.current_logprob = std::move(stats.log_probs);
      terms.current_entropy = std::move(stats.entropies);
      for (std::size_t t = 0; t < len; ++t) {
        const double r = token_importance_ratio(terms.current_logprob[t], traj.gen_logprob[t]);
        const auto c = clipped_token_objective(r, adv, settings.clip);
        terms.tokens[t] = c;
        terms.weights[t] = c.grad_weight == 0.0 ? 0.0 : -c.grad_weight / normaliser;
        total += c.objective_value;

        const bool prefix = traj.provenance[t] == Provenance::offpolicy_prefix;
        auto& st = out.stats;
        if (prefix) {
          ++st.prefix_tokens;
          st.prefix_clipped += c.clipped_active ? 1 : 0;
        } else {
          ++st.suffix_tokens;
          st.suffix_clipped += c.clipped_active ? 1 : 0;
          st.max_suffix_ratio_deviation =
              std::max(st.max_suffix_ratio_deviation, std::abs(r - 1.0));
        }
        const auto bin = position_decile(t, len);
        ++st.decile_tokens[bin];
        st.decile_clipped[bin] += c.clipped_active ? 1 : 0;
        st.decile_entropy_sum[bin] += terms.current_entropy[t];
      }
    }
  }
  out.objective = total / normaliser;
  out.loss = -out.objective;
  return out;
}

ParamVector assemble_gradient(std::span<const GroupRollout> groups, const ParamVector& params,
                              const PolicyArchitecture& arch, const BatchObjective& objective,
                              double temperature) {
  ParamVector grad = params.zeros_like();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (!objective.kept[g]) continue;
    const auto& trajs = groups[g].trajectories;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      const auto& w = objective.terms[g][i].weights;
      if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) continue;
      accumulate_weighted_logprob_grad(params, arch, trajs[i].prompt, trajs[i].tokens, w,
                                       temperature, grad);
    }
  }
  return grad;
}

ParamVector surrogate_gradient(std::span<const GroupRollout> groups, const ParamVector& params,
                               const PolicyArchitecture& arch,
                               const ObjectiveSettings& settings) {
  const auto obj = batch_objective(groups, params, arch, settings);
  return assemble_gradient(groups, params, arch, obj, settings.temperature);
}

}  // namespace soup
