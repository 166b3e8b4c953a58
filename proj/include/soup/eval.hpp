#pragma once

// Scoring and analysis: avg@k, pass@k, relay inference between two
// checkpoints, positional entropy/clip bins, and the histogram of tokens
// sitting right before each truncation point.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "soup/policy.hpp"
#include "soup/rng.hpp"
#include "soup/rollout.hpp"
#include "soup/tasks.hpp"

namespace soup {

struct SamplingSettings {
  std::size_t max_len = 64;
  double temperature = 0.6;
};

/// Per-instance correctness of n independent samples (row i, sample j).
/// Instance i draws from rng.derive("instance", i).
std::vector<std::vector<bool>> sample_correctness(const ParamVector& params,
                                                  const PolicyArchitecture& arch,
                                                  std::span<const Instance> eval_set,
                                                  std::size_t n, const SamplingSettings& settings,
                                                  const Rng& rng);

/// Mean over instances of (correct samples / k).
double avg_at_k(const ParamVector& params, const PolicyArchitecture& arch,
                std::span<const Instance> eval_set, std::size_t k,
                const SamplingSettings& settings, const Rng& rng);

/// Unbiased 1 - C(n-c, k) / C(n, k). Exact integer binomials while they fit
/// in 64 bits, the usual running product otherwise. Throws
/// std::invalid_argument unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(std::uint64_t n, std::uint64_t c, std::uint64_t k);

/// Fraction of the floor(n/k) consecutive chunks of size k holding at
/// least one correct sample.
double pass_at_k_empirical(const std::vector<bool>& outcomes, std::size_t k);

enum class PassEstimator { unbiased, empirical };

struct EvalReport {
  std::size_t sample_count = 0;  // n per instance
  std::size_t instance_count = 0;
  double avg_at_n = 0.0;
  std::map<std::size_t, double> pass_at;  // k -> mean pass@k
  std::vector<std::size_t> correct_counts;
  std::vector<std::uint64_t> seeds;
};

EvalReport make_report(const std::vector<std::vector<bool>>& correctness,
                       std::span<const std::size_t> k_list, PassEstimator estimator,
                       std::uint64_t seed);

struct RelayPoint {
  std::size_t k = 0;
  double relay = 0.0;
  double single = 0.0;
  double diff = 0.0;
};

struct RelayReport {
  EvalReport relay;
  EvalReport single;
  std::vector<RelayPoint> curve;
};

/// For each instance, n relay samples (behavior prefix cut at `ratio`,
/// current-policy continuation, built by build_soup_trajectory) and n
/// samples from the current policy alone.
RelayReport relay_inference(const ParamVector& behavior_params,
                            const ParamVector& current_params, const PolicyArchitecture& arch,
                            std::span<const Instance> eval_set, double ratio, std::size_t n,
                            std::span<const std::size_t> k_list,
                            const SamplingSettings& settings, const Rng& rng,
                            PassEstimator estimator = PassEstimator::unbiased);

/// Writes "k,relay_pass,single_pass,diff".
void write_relay_csv(const std::filesystem::path& path, const RelayReport& report);

struct PositionBin {
  double mean_entropy = 0.0;  // NaN when the bin is empty
  double clip_fraction = 0.0;
  std::size_t tokens = 0;
};

struct PositionBinStats {
  std::array<PositionBin, 10> bins;
};

/// Bins every token by floor(10 t / len) and averages its generation
/// entropy and clip flag. `clipped[i]` must match trajectory i's length;
/// pass an empty span to treat every token as unclipped.
PositionBinStats position_bin_diagnostics(std::span<const Trajectory> trajectories,
                                          std::span<const std::vector<bool>> clipped);

/// Counts tokens[truncation_index - 1] over trajectories with a nonempty prefix.
std::map<TokenId, std::size_t> truncation_token_histogram(
    std::span<const Trajectory> trajectories);

struct CheckpointScore {
  std::int64_t step = 0;
  double score = 0.0;
};

/// Index of the best score (earlier step on ties) and of the best among
/// checkpoints strictly earlier than it; the second is -1 when none exist.
std::pair<std::ptrdiff_t, std::ptrdiff_t> select_relay_pair(
    std::span<const CheckpointScore> scores);

/// Least-squares slope of y against its index, skipping NaN entries.
double decile_slope(std::span<const double> values);

}  // namespace soup
