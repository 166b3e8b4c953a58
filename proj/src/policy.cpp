#include "soup/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "soup/kernels.hpp"

namespace soup {

const Vocabulary& Vocabulary::digits() {
  static const Vocabulary v = [] {
    Vocabulary out;
    for (int d = 0; d < 10; ++d) out.symbols.push_back(std::to_string(d));
    out.symbols.insert(out.symbols.end(), {"<sep>", "<bos>", "<eos>", "<pad>"});
    out.sep = 10;
    out.bos = 11;
    out.eos = 12;
    out.pad = 13;
    return out;
  }();
  return v;
}

TokenId Vocabulary::id_of(const std::string& symbol) const {
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] == symbol) return static_cast<TokenId>(i);
  }
  throw std::out_of_range("unknown token symbol '" + symbol + "'");
}

const std::string& Vocabulary::symbol(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " out of vocabulary range");
  }
  return symbols[static_cast<std::size_t>(id)];
}

void Vocabulary::validate() const {
  if (symbols.size() < 4) throw std::invalid_argument("vocabulary needs at least 4 symbols");
  if (std::set<std::string>(symbols.begin(), symbols.end()).size() != symbols.size()) {
    throw std::invalid_argument("vocabulary symbols must be distinct");
  }
  const auto n = static_cast<TokenId>(symbols.size());
  for (TokenId id : {bos, eos, pad, sep}) {
    if (id < 0 || id >= n) throw std::invalid_argument("special token id out of range");
  }
  if (std::set<TokenId>{bos, eos, pad, sep}.size() != 4) {
    throw std::invalid_argument("special token ids must be distinct");
  }
}

PolicyArchitecture PolicyArchitecture::for_vocabulary(const Vocabulary& vocab, int window,
                                                      int embed_dim, int hidden_dim) {
  PolicyArchitecture a;
  a.window = window;
  a.embed_dim = embed_dim;
  a.hidden_dim = hidden_dim;
  a.vocab_size = static_cast<int>(vocab.size());
  a.bos_token = vocab.bos;
  a.pad_token = vocab.pad;
  return a;
}

void PolicyArchitecture::validate() const {
  if (window < 1 || embed_dim < 1 || hidden_dim < 1) {
    throw std::invalid_argument("policy dimensions must be at least 1");
  }
  if (vocab_size < 4) throw std::invalid_argument("vocab_size must be at least 4");
  if (bos_token < 0 || bos_token >= vocab_size || pad_token < 0 || pad_token >= vocab_size ||
      bos_token == pad_token) {
    throw std::invalid_argument("invalid BOS/PAD ids for architecture");
  }
}

std::shared_ptr<const ParamLayout> make_layout(const PolicyArchitecture& arch) {
  arch.validate();
  const auto v = static_cast<std::size_t>(arch.vocab_size);
  const auto e = static_cast<std::size_t>(arch.embed_dim);
  const auto h = static_cast<std::size_t>(arch.hidden_dim);
  return std::make_shared<const ParamLayout>(ParamLayout::packed({
      {segment_names::embedding, {v, e}},
      {segment_names::hidden_weights, {h, arch.input_dim()}},
      {segment_names::hidden_bias, {h}},
      {segment_names::output_weights, {v, h}},
      {segment_names::output_bias, {v}},
  }));
}

ParamVector init_params(const PolicyArchitecture& arch, Rng& rng, double scale) {
  ParamVector p(make_layout(arch));
  for (auto& x : p.values()) x = (2.0 * rng.uniform() - 1.0) * scale;
  return p;
}

ParamVector snapshot(const ParamVector& params) { return params; }

namespace {

struct Views {
  std::span<const double> embedding, hidden_w, hidden_b, output_w, output_b;

  Views(const ParamVector& p)
      : embedding(p.segment(segment_names::embedding)),
        hidden_w(p.segment(segment_names::hidden_weights)),
        hidden_b(p.segment(segment_names::hidden_bias)),
        output_w(p.segment(segment_names::output_weights)),
        output_b(p.segment(segment_names::output_bias)) {}
};

struct GradViews {
  std::span<double> embedding, hidden_w, hidden_b, output_w, output_b;

  GradViews(ParamVector& p)
      : embedding(p.segment(segment_names::embedding)),
        hidden_w(p.segment(segment_names::hidden_weights)),
        hidden_b(p.segment(segment_names::hidden_bias)),
        output_w(p.segment(segment_names::output_weights)),
        output_b(p.segment(segment_names::output_bias)) {}
};

void check_layout(const ParamVector& params, const PolicyArchitecture& arch) {
  if (params.size() != make_layout(arch)->total_size()) {
    throw std::invalid_argument("parameter vector does not match policy architecture");
  }
}

/// Activations of one forward pass; reused across positions.
struct Forward {
  std::vector<TokenId> slots;
  std::vector<double> input;
  std::vector<double> hidden;
  std::vector<double> logits;

  explicit Forward(const PolicyArchitecture& arch)
      : slots(static_cast<std::size_t>(arch.window)),
        input(arch.input_dim()),
        hidden(static_cast<std::size_t>(arch.hidden_dim)),
        logits(static_cast<std::size_t>(arch.vocab_size)) {}

  // history is everything preceding the token being predicted
  void run(const Views& w, const PolicyArchitecture& arch, std::span<const TokenId> history) {
    const auto window = static_cast<std::size_t>(arch.window);
    const auto e = static_cast<std::size_t>(arch.embed_dim);
    const std::size_t have = std::min(window, history.size());
    const std::size_t pad = window - have;
    for (std::size_t i = 0; i < window; ++i) {
      const TokenId t = i < pad ? arch.bos_token : history[history.size() - have + (i - pad)];
      if (t < 0 || t >= arch.vocab_size) {
        throw std::out_of_range("token id " + std::to_string(t) + " out of vocabulary range");
      }
      slots[i] = t;
      std::copy_n(w.embedding.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * e),
                  e, input.begin() + static_cast<std::ptrdiff_t>(i * e));
    }
    const auto& k = kernels::active();
    k.gemv(w.hidden_w.data(), hidden.size(), input.size(), input.data(), w.hidden_b.data(),
           hidden.data());
    for (auto& a : hidden) a = std::tanh(a);
    k.gemv(w.output_w.data(), logits.size(), hidden.size(), hidden.data(), w.output_b.data(),
           logits.data());
  }
};

void fill_distribution(std::span<const double> logits, TokenId pad, double temperature,
                       std::vector<double>& probs, std::vector<double>& log_probs) {
  const std::size_t n = logits.size();
  probs.assign(n, 0.0);
  log_probs.assign(n, -std::numeric_limits<double>::infinity());
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (static_cast<TokenId>(j) == pad) continue;
    max_scaled = std::max(max_scaled, logits[j] / temperature);
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (static_cast<TokenId>(j) == pad) continue;
    probs[j] = std::exp(logits[j] / temperature - max_scaled);
    denom += probs[j];
  }
  const double log_z = max_scaled + std::log(denom);
  for (std::size_t j = 0; j < n; ++j) {
    if (static_cast<TokenId>(j) == pad) continue;
    probs[j] /= denom;
    log_probs[j] = logits[j] / temperature - log_z;
  }
}

double entropy_from(std::span<const double> probs, std::span<const double> log_probs) {
  double h = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > 0.0) h -= probs[j] * log_probs[j];
  }
  return std::max(h, 0.0);
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("temperature must be positive and finite");
  }
}

std::vector<TokenId> concat(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<TokenId> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

std::vector<double> logits(const ParamVector& params, const PolicyArchitecture& arch,
                           std::span<const TokenId> context) {
  check_layout(params, arch);
  Forward f(arch);
  f.run(Views(params), arch, context);
  return f.logits;
}

TokenDistribution distribution_from_logits(std::vector<double> logits, TokenId pad_token,
                                           double temperature) {
  check_temperature(temperature);
  TokenDistribution d;
  d.temperature = temperature;
  fill_distribution(logits, pad_token, temperature, d.probs, d.log_probs);
  d.logits = std::move(logits);
  return d;
}

TokenDistribution next_token_distribution(const ParamVector& params,
                                          const PolicyArchitecture& arch,
                                          std::span<const TokenId> context,
                                          double temperature) {
  return distribution_from_logits(logits(params, arch, context), arch.pad_token, temperature);
}

TokenId sample_token(const TokenDistribution& dist, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  TokenId last_live = -1;
  for (std::size_t j = 0; j < dist.probs.size(); ++j) {
    if (dist.probs[j] <= 0.0) continue;
    last_live = static_cast<TokenId>(j);
    cum += dist.probs[j];
    if (u < cum) return last_live;
  }
  // u landed in the rounding gap above the final cumulative sum
  return last_live;
}

double token_entropy(const TokenDistribution& dist) {
  return entropy_from(dist.probs, dist.log_probs);
}

double token_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

SequenceStats sequence_stats(const ParamVector& params, const PolicyArchitecture& arch,
                             std::span<const TokenId> prompt,
                             std::span<const TokenId> response, double temperature) {
  check_layout(params, arch);
  check_temperature(temperature);
  if (response.empty()) throw std::invalid_argument("response must be nonempty");
  for (TokenId t : response) {
    if (t == arch.pad_token) throw std::invalid_argument("response contains PAD");
  }
  const auto full = concat(prompt, response);
  const Views w(params);
  Forward f(arch);
  std::vector<double> probs, log_probs;
  SequenceStats out;
  out.log_probs.reserve(response.size());
  out.entropies.reserve(response.size());
  for (std::size_t t = 0; t < response.size(); ++t) {
    f.run(w, arch, std::span<const TokenId>(full).first(prompt.size() + t));
    fill_distribution(f.logits, arch.pad_token, temperature, probs, log_probs);
    const TokenId y = response[t];
    if (y < 0 || y >= arch.vocab_size) throw std::out_of_range("response token out of range");
    out.log_probs.push_back(log_probs[static_cast<std::size_t>(y)]);
    out.entropies.push_back(entropy_from(probs, log_probs));
  }
  return out;
}

std::vector<double> sequence_logprobs(const ParamVector& params, const PolicyArchitecture& arch,
                                      std::span<const TokenId> prompt,
                                      std::span<const TokenId> response, double temperature) {
  return sequence_stats(params, arch, prompt, response, temperature).log_probs;
}

void accumulate_weighted_logprob_grad(const ParamVector& params,
                                      const PolicyArchitecture& arch,
                                      std::span<const TokenId> prompt,
                                      std::span<const TokenId> response,
                                      std::span<const double> weights, double temperature,
                                      ParamVector& grad) {
  check_layout(params, arch);
  check_temperature(temperature);
  if (weights.size() != response.size()) {
    throw std::invalid_argument("token weight count does not match response length");
  }
  if (grad.size() != params.size()) throw std::invalid_argument("gradient buffer size mismatch");
  for (double w : weights) {
    if (!std::isfinite(w)) throw NumericalError("non-finite token weight");
  }

  const auto full = concat(prompt, response);
  const Views w(params);
  GradViews g(grad);
  Forward f(arch);
  const auto& k = kernels::active();
  const auto e = static_cast<std::size_t>(arch.embed_dim);
  const auto hdim = static_cast<std::size_t>(arch.hidden_dim);
  const auto vdim = static_cast<std::size_t>(arch.vocab_size);
  std::vector<double> probs, log_probs;
  std::vector<double> d_logits(vdim), d_hidden(hdim), d_input(arch.input_dim());

  for (std::size_t t = 0; t < response.size(); ++t) {
    const double wt = weights[t];
    if (wt == 0.0) continue;
    f.run(w, arch, std::span<const TokenId>(full).first(prompt.size() + t));
    fill_distribution(f.logits, arch.pad_token, temperature, probs, log_probs);

    // d(w log p_y)/dz_j = w (1[j=y] - p_j) / tau; PAD has p = 0 and no gradient.
    const auto y = static_cast<std::size_t>(response[t]);
    for (std::size_t j = 0; j < vdim; ++j) {
      const double ind = j == y ? 1.0 : 0.0;
      d_logits[j] = static_cast<TokenId>(j) == arch.pad_token
                        ? 0.0
                        : wt * (ind - probs[j]) / temperature;
    }
    k.axpy(1.0, d_logits.data(), g.output_b.data(), vdim);
    k.ger_acc(g.output_w.data(), vdim, hdim, d_logits.data(), f.hidden.data());

    std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
    k.gemv_t_acc(w.output_w.data(), vdim, hdim, d_logits.data(), d_hidden.data());
    for (std::size_t i = 0; i < hdim; ++i) d_hidden[i] *= 1.0 - f.hidden[i] * f.hidden[i];
    k.axpy(1.0, d_hidden.data(), g.hidden_b.data(), hdim);
    k.ger_acc(g.hidden_w.data(), hdim, d_input.size(), d_hidden.data(), f.input.data());

    std::fill(d_input.begin(), d_input.end(), 0.0);
    k.gemv_t_acc(w.hidden_w.data(), hdim, d_input.size(), d_hidden.data(), d_input.data());
    for (std::size_t slot = 0; slot < f.slots.size(); ++slot) {
      const auto row = static_cast<std::size_t>(f.slots[slot]);
      k.axpy(1.0, d_input.data() + slot * e, g.embedding.data() + row * e, e);
    }
  }
}

ParamVector weighted_logprob_grad(const ParamVector& params, const PolicyArchitecture& arch,
                                  std::span<const TokenId> prompt,
                                  std::span<const TokenId> response,
                                  std::span<const double> weights, double temperature) {
  ParamVector grad = params.zeros_like();
  accumulate_weighted_logprob_grad(params, arch, prompt, response, weights, temperature, grad);
  return grad;
}

}  // namespace soup
