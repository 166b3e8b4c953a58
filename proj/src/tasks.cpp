#include "soup/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace soup {

std::string_view task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::mod_sum: return "mod_sum";
    case TaskKind::reverse: return "reverse";
    case TaskKind::sort: return "sort";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "mod_sum") return TaskKind::mod_sum;
  if (lower == "reverse") return TaskKind::reverse;
  if (lower == "sort") return TaskKind::sort;
  throw std::invalid_argument("unknown task kind '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
  const auto [lo, hi] = kind == TaskKind::mod_sum ? std::pair{2, 8} : std::pair{2, 10};
  if (difficulty < lo || difficulty > hi) {
    throw std::invalid_argument(std::string(task_kind_name(kind)) + " difficulty must be in [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

Instance make_instance(const TaskSpec& spec, const std::vector<int>& digits) {
  spec.validate();
  if (digits.size() != static_cast<std::size_t>(spec.difficulty)) {
    throw std::invalid_argument("digit count does not match task difficulty");
  }
  const auto& vocab = Vocabulary::digits();
  Instance inst;
  inst.prompt.push_back(vocab.bos);
  for (int d : digits) {
    if (d < 0 || d > 9) throw std::invalid_argument("digits must be in [0, 9]");
    inst.prompt.push_back(static_cast<TokenId>(d));
  }
  inst.prompt.push_back(vocab.sep);

  std::vector<TokenId> body(digits.begin(), digits.end());
  switch (spec.kind) {
    case TaskKind::mod_sum:
      inst.answer = {static_cast<TokenId>(std::accumulate(digits.begin(), digits.end(), 0) % 10)};
      break;
    case TaskKind::reverse:
      inst.answer.assign(body.rbegin(), body.rend());
      break;
    case TaskKind::sort:
      std::sort(body.begin(), body.end());
      inst.answer = std::move(body);
      break;
  }
  return inst;
}

Instance generate_instance(const TaskSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<int> digits(static_cast<std::size_t>(spec.difficulty));
  for (auto& d : digits) d = static_cast<int>(rng.below(10));
  return make_instance(spec, digits);
}

bool is_equivalent(std::span<const TokenId> answer, std::span<const TokenId> response) {
  const auto& vocab = Vocabulary::digits();
  auto end = std::find(response.begin(), response.end(), vocab.eos);
  auto begin = response.begin();
  while (begin != end && *begin == vocab.pad) ++begin;
  while (end != begin && *(end - 1) == vocab.pad) --end;
  return std::equal(begin, end, answer.begin(), answer.end());
}

double reward(std::span<const TokenId> answer, std::span<const TokenId> response) {
  return is_equivalent(answer, response) ? 1.0 : 0.0;
}

std::vector<Instance> make_eval_set(const TaskSpec& spec, std::size_t size,
                                    std::uint64_t split_seed) {
  Rng rng = Rng(split_seed).derive("eval_set");
  std::vector<Instance> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) out.push_back(generate_instance(spec, rng));
  return out;
}

std::string format_tokens(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.symbol(tokens[i]);
  }
  return out;
}

std::vector<TokenId> parse_tokens(std::string_view text, const Vocabulary& vocab) {
  std::istringstream in{std::string(text)};
  std::vector<TokenId> out;
  std::string sym;
  while (in >> sym) out.push_back(vocab.id_of(sym));
  return out;
}

void write_eval_set(const std::filesystem::path& path, const std::vector<Instance>& set) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write eval set to " + path.string());
  for (const auto& inst : set) {
    out << format_tokens(inst.prompt) << '\t' << format_tokens(inst.answer) << '\n';
  }
}

std::vector<Instance> read_eval_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read eval set " + path.string());
  std::vector<Instance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": missing TAB");
    }
    out.push_back({parse_tokens(std::string_view(line).substr(0, tab)),
                   parse_tokens(std::string_view(line).substr(tab + 1))});
  }
  return out;
}

}  // namespace soup
