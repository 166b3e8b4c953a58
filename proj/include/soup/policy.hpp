#pragma once

// Tiny autoregressive categorical policy.
//
// The model sees the last `window` tokens of the history (left-padded with
// BOS), looks up one embedding per slot, concatenates them, applies a
// single tanh hidden layer and a linear read-out to vocabulary logits.
// PAD is never generated: its probability is pinned to exactly zero.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "soup/numerics.hpp"
#include "soup/rng.hpp"

namespace soup {

using TokenId = std::int32_t;

struct Vocabulary {
  std::vector<std::string> symbols;
  TokenId bos = 0;
  TokenId eos = 0;
  TokenId pad = 0;
  TokenId sep = 0;

  /// Digits 0-9, then <sep>, <bos>, <eos>, <pad>: 14 symbols shared by
  /// every synthetic task.
  static const Vocabulary& digits();

  std::size_t size() const { return symbols.size(); }
  TokenId id_of(const std::string& symbol) const;
  const std::string& symbol(TokenId id) const;
  void validate() const;
};

struct PolicyArchitecture {
  int window = 8;
  int embed_dim = 16;
  int hidden_dim = 64;
  int vocab_size = 14;
  TokenId bos_token = 11;
  TokenId pad_token = 13;

  static PolicyArchitecture for_vocabulary(const Vocabulary& vocab, int window = 8,
                                           int embed_dim = 16, int hidden_dim = 64);

  void validate() const;
  std::size_t input_dim() const {
    return static_cast<std::size_t>(window) * static_cast<std::size_t>(embed_dim);
  }
  bool operator==(const PolicyArchitecture&) const = default;
};

namespace segment_names {
inline constexpr const char* embedding = "embedding";
inline constexpr const char* hidden_weights = "hidden_weights";
inline constexpr const char* hidden_bias = "hidden_bias";
inline constexpr const char* output_weights = "output_weights";
inline constexpr const char* output_bias = "output_bias";
}  // namespace segment_names

std::shared_ptr<const ParamLayout> make_layout(const PolicyArchitecture& arch);

/// Uniform in [-scale, scale].
ParamVector init_params(const PolicyArchitecture& arch, Rng& rng, double scale = 0.08);

/// Deep copy; the result shares nothing mutable with the source.
ParamVector snapshot(const ParamVector& params);

struct TokenDistribution {
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<double> log_probs;  // -inf at PAD
  double temperature = 1.0;

  double log_prob(TokenId token) const { return log_probs[static_cast<std::size_t>(token)]; }
};

/// Raw logits for the next token after `context`.
std::vector<double> logits(const ParamVector& params, const PolicyArchitecture& arch,
                           std::span<const TokenId> context);

TokenDistribution next_token_distribution(const ParamVector& params,
                                          const PolicyArchitecture& arch,
                                          std::span<const TokenId> context,
                                          double temperature);

/// Builds the distribution from precomputed logits. PAD gets probability 0.
TokenDistribution distribution_from_logits(std::vector<double> logits, TokenId pad_token,
                                           double temperature);

/// Inverse-CDF draw in vocabulary order; never returns PAD.
TokenId sample_token(const TokenDistribution& dist, Rng& rng);

/// Entropy in nats over the non-PAD tokens.
double token_entropy(const TokenDistribution& dist);
double token_entropy(std::span<const double> probs);

struct SequenceStats {
  std::vector<double> log_probs;
  std::vector<double> entropies;
};

/// Teacher-forced per-token log-probabilities of `response` given `prompt`.
std::vector<double> sequence_logprobs(const ParamVector& params, const PolicyArchitecture& arch,
                                      std::span<const TokenId> prompt,
                                      std::span<const TokenId> response, double temperature);

/// Same pass, also returning the per-position entropy.
SequenceStats sequence_stats(const ParamVector& params, const PolicyArchitecture& arch,
                             std::span<const TokenId> prompt,
                             std::span<const TokenId> response, double temperature);

/// Gradient of sum_t weights[t] * log pi(response[t] | prompt, response[<t]).
ParamVector weighted_logprob_grad(const ParamVector& params, const PolicyArchitecture& arch,
                                  std::span<const TokenId> prompt,
                                  std::span<const TokenId> response,
                                  std::span<const double> weights, double temperature);

/// Adds the same gradient into `grad`. Tokens with weight exactly 0 are
/// skipped, so they contribute nothing at all to the accumulation.
void accumulate_weighted_logprob_grad(const ParamVector& params,
                                      const PolicyArchitecture& arch,
                                      std::span<const TokenId> prompt,
                                      std::span<const TokenId> response,
                                      std::span<const double> weights, double temperature,
                                      ParamVector& grad);

}  // namespace soup
