#pragma once

// Synthetic prompt/answer tasks with binary verifiable rewards.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "soup/policy.hpp"
#include "soup/rng.hpp"

namespace soup {

enum class TaskKind { mod_sum, reverse, sort };

std::string_view task_kind_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::mod_sum;
  int difficulty = 4;  // operand count (MOD_SUM) or sequence length

  void validate() const;
};

struct Instance {
  std::vector<TokenId> prompt;  // BOS digits... SEP
  std::vector<TokenId> answer;  // canonical answer, no special tokens

  bool operator==(const Instance&) const = default;
};

Instance generate_instance(const TaskSpec& spec, Rng& rng);

/// Builds the instance for explicit operand digits.
Instance make_instance(const TaskSpec& spec, const std::vector<int>& digits);

/// True iff `response` cut at its first EOS, with PAD trimmed, equals `answer`.
bool is_equivalent(std::span<const TokenId> answer, std::span<const TokenId> response);

/// 1.0 when equivalent, else 0.0.
double reward(std::span<const TokenId> answer, std::span<const TokenId> response);

std::vector<Instance> make_eval_set(const TaskSpec& spec, std::size_t size,
                                    std::uint64_t split_seed);

std::string format_tokens(std::span<const TokenId> tokens,
                          const Vocabulary& vocab = Vocabulary::digits());
std::vector<TokenId> parse_tokens(std::string_view text,
                                  const Vocabulary& vocab = Vocabulary::digits());

/// One instance per line: prompt symbols, TAB, answer symbols.
void write_eval_set(const std::filesystem::path& path, const std::vector<Instance>& set);
std::vector<Instance> read_eval_set(const std::filesystem::path& path);

}  // namespace soup
