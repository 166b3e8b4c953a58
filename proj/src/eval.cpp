#include "soup/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>

namespace soup {

std::vector<std::vector<bool>> sample_correctness(const ParamVector& params,
                                                  const PolicyArchitecture& arch,
                                                  std::span<const Instance> eval_set,
                                                  std::size_t n, const SamplingSettings& settings,
                                                  const Rng& rng) {
  const TokenId eos = Vocabulary::digits().eos;
  std::vector<std::vector<bool>> out(eval_set.size(), std::vector<bool>(n, false));
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const Rng inst_rng = rng.derive("instance", i);
    for (std::size_t j = 0; j < n; ++j) {
      Rng sample_rng = inst_rng.derive("sample", j);
      const auto traj = build_onpolicy_trajectory(params, arch, eval_set[i], settings.max_len,
                                                   settings.temperature, eos, sample_rng);
      out[i][j] = is_equivalent(eval_set[i].answer, traj.tokens);
    }
  }
  return out;
}

double avg_at_k(const ParamVector& params, const PolicyArchitecture& arch,
                std::span<const Instance> eval_set, std::size_t k,
                const SamplingSettings& settings, const Rng& rng) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (eval_set.empty()) return 0.0;
  const auto rows = sample_correctness(params, arch, eval_set, k, settings, rng);
  double total = 0.0;
  for (const auto& row : rows) {
    total += static_cast<double>(std::count(row.begin(), row.end(), true)) /
             static_cast<double>(k);
  }
  return total / static_cast<double>(rows.size());
}

namespace {

__extension__ using u128 = unsigned __int128;

// C(n, k) if it fits in 64 bits.
std::optional<std::uint64_t> exact_binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  u128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;  // exact: acc * (n-k+i) is divisible by i
    if (acc > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  }
  return static_cast<std::uint64_t>(acc);
}

}  // namespace

double pass_at_k(std::uint64_t n, std::uint64_t c, std::uint64_t k) {
  if (c > n) throw std::invalid_argument("pass_at_k: c must not exceed n");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: k must be in [1, n]");
  if (n - c < k) return 1.0;
  if (c == 0) return 0.0;
  const auto total = exact_binomial(n, k);
  const auto miss = exact_binomial(n - c, k);
  if (total && miss) {
    return static_cast<double>(*total - *miss) / static_cast<double>(*total);
  }
  // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
  double prob_miss = 1.0;
  for (std::uint64_t i = n - c + 1; i <= n; ++i) {
    prob_miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  }
  return 1.0 - prob_miss;
}

double pass_at_k_empirical(const std::vector<bool>& outcomes, std::size_t k) {
  if (k < 1 || k > outcomes.size()) throw std::invalid_argument("k must be in [1, n]");
  const std::size_t chunks = outcomes.size() / k;
  std::size_t hit = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    bool any = false;
    for (std::size_t j = 0; j < k; ++j) any = any || outcomes[c * k + j];
    hit += any ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(chunks);
}

EvalReport make_report(const std::vector<std::vector<bool>>& correctness,
                       std::span<const std::size_t> k_list, PassEstimator estimator,
                       std::uint64_t seed) {
  EvalReport r;
  r.instance_count = correctness.size();
  r.sample_count = correctness.empty() ? 0 : correctness.front().size();
  r.seeds = {seed};
  double avg = 0.0;
  for (const auto& row : correctness) {
    const auto c = static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
    r.correct_counts.push_back(c);
    if (!row.empty()) avg += static_cast<double>(c) / static_cast<double>(row.size());
  }
  if (!correctness.empty()) r.avg_at_n = avg / static_cast<double>(correctness.size());
  for (std::size_t k : k_list) {
    if (k < 1 || k > r.sample_count) {
      throw std::invalid_argument("pass@k requested for k outside [1, n]");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < correctness.size(); ++i) {
      acc += estimator == PassEstimator::unbiased
                 ? pass_at_k(r.sample_count, r.correct_counts[i], k)
                 : pass_at_k_empirical(correctness[i], k);
    }
    r.pass_at[k] = correctness.empty() ? 0.0 : acc / static_cast<double>(correctness.size());
  }
  return r;
}

RelayReport relay_inference(const ParamVector& behavior_params,
                            const ParamVector& current_params, const PolicyArchitecture& arch,
                            std::span<const Instance> eval_set, double ratio, std::size_t n,
                            std::span<const std::size_t> k_list,
                            const SamplingSettings& settings, const Rng& rng,
                            PassEstimator estimator) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("relay ratio must be in (0, 1)");
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  const TokenId eos = Vocabulary::digits().eos;
  TruncationStrategy strategy;
  strategy.kind = TruncationKind::length_ratio;
  strategy.ratio = ratio;

  std::vector<std::vector<bool>> relay(eval_set.size(), std::vector<bool>(n, false));
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const Rng inst_rng = rng.derive("relay_instance", i);
    for (std::size_t j = 0; j < n; ++j) {
      Rng sample_rng = inst_rng.derive("sample", j);
      const auto traj =
          build_soup_trajectory(behavior_params, current_params, arch, eval_set[i], strategy,
                                settings.max_len, settings.temperature, eos, sample_rng);
      relay[i][j] = is_equivalent(eval_set[i].answer, traj.tokens);
    }
  }
  const auto single = sample_correctness(current_params, arch, eval_set, n, settings,
                                         rng.derive("single"));

  RelayReport out;
  out.relay = make_report(relay, k_list, estimator, rng.seed());
  out.single = make_report(single, k_list, estimator, rng.seed());
  for (std::size_t k : k_list) {
    const double a = out.relay.pass_at.at(k);
    const double b = out.single.pass_at.at(k);
    out.curve.push_back({k, a, b, a - b});
  }
  return out;
}

void write_relay_csv(const std::filesystem::path& path, const RelayReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "k,relay_pass,single_pass,diff\n";
  for (const auto& p : report.curve) {
    out << p.k << ',' << p.relay << ',' << p.single << ',' << p.diff << '\n';
  }
}

PositionBinStats position_bin_diagnostics(std::span<const Trajectory> trajectories,
                                          std::span<const std::vector<bool>> clipped) {
  if (!clipped.empty() && clipped.size() != trajectories.size()) {
    throw std::invalid_argument("clip flags must cover every trajectory");
  }
  std::array<double, 10> entropy_sum{};
  std::array<std::size_t, 10> clip_count{};
  PositionBinStats out;
  std::size_t total = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& traj = trajectories[i];
    const std::size_t len = traj.size();
    if (!clipped.empty() && clipped[i].size() != len) {
      throw std::invalid_argument("clip flag count differs from trajectory length");
    }
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t bin = std::min<std::size_t>(9, 10 * t / len);
      ++out.bins[bin].tokens;
      entropy_sum[bin] += traj.gen_entropy[t];
      if (!clipped.empty() && clipped[i][t]) ++clip_count[bin];
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("position diagnostics need at least one token");
  for (std::size_t b = 0; b < 10; ++b) {
    auto& bin = out.bins[b];
    if (bin.tokens == 0) {
      bin.mean_entropy = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    bin.mean_entropy = entropy_sum[b] / static_cast<double>(bin.tokens);
    bin.clip_fraction = static_cast<double>(clip_count[b]) / static_cast<double>(bin.tokens);
  }
  return out;
}

std::map<TokenId, std::size_t> truncation_token_histogram(
    std::span<const Trajectory> trajectories) {
  std::map<TokenId, std::size_t> out;
  for (const auto& traj : trajectories) {
    if (traj.truncation_index == 0 || traj.truncation_index > traj.tokens.size()) continue;
    ++out[traj.tokens[traj.truncation_index - 1]];
  }
  return out;
}

std::pair<std::ptrdiff_t, std::ptrdiff_t> select_relay_pair(
    std::span<const CheckpointScore> scores) {
  auto best_of = [&](auto keep) {
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!keep(scores[i])) continue;
      if (best < 0) {
        best = static_cast<std::ptrdiff_t>(i);
        continue;
      }
      const auto& cur = scores[static_cast<std::size_t>(best)];
      if (scores[i].score > cur.score ||
          (scores[i].score == cur.score && scores[i].step < cur.step)) {
        best = static_cast<std::ptrdiff_t>(i);
      }
    }
    return best;
  };
  const auto best = best_of([](const CheckpointScore&) { return true; });
  if (best < 0) return {-1, -1};
  const auto best_step = scores[static_cast<std::size_t>(best)].step;
  const auto prior = best_of([&](const CheckpointScore& s) { return s.step < best_step; });
  return {best, prior};
}

double decile_slope(std::span<const double> values) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) continue;
    const auto x = static_cast<double>(i);
    sx += x;
    sy += values[i];
    sxx += x * x;
    sxy += x * values[i];
    n += 1;
  }
  const double denom = n * sxx - sx * sx;
  if (n < 2 || denom == 0.0) return 0.0;
  return (n * sxy - sx * sy) / denom;
}

}  // namespace soup
