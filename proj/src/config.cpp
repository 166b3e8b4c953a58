#include "soup/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace soup {

std::string_view algorithm_name(Algorithm a) {
  return a == Algorithm::on_policy ? "on_policy" : "soup";
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) +
                    "' as " + std::string(want));
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "nonnegative integer");
  return out;
}

std::int64_t to_i64(std::string_view key, std::string_view v) {
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "integer");
  return out;
}

double to_f64(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(std::string(v), &used);
    if (used != v.size() || !std::isfinite(out)) bad_value(key, v, "finite real");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "real");
  }
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "boolean");
}

std::string fmt_f64(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(TrainConfig&, std::string_view key, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define SOUP_SIZE_FIELD(member)                                                           \
  Field {                                                                                 \
    [](TrainConfig& c, std::string_view k, std::string_view v) {                          \
      c.member = static_cast<decltype(c.member)>(to_u64(k, v));                           \
    },                                                                                    \
        [](const TrainConfig& c) { return std::to_string(c.member); }                     \
  }
#define SOUP_INT_FIELD(member)                                                            \
  Field {                                                                                 \
    [](TrainConfig& c, std::string_view k, std::string_view v) {                          \
      c.member = static_cast<decltype(c.member)>(to_i64(k, v));                           \
    },                                                                                    \
        [](const TrainConfig& c) { return std::to_string(c.member); }                     \
  }
#define SOUP_REAL_FIELD(member)                                                           \
  Field {                                                                                 \
    [](TrainConfig& c, std::string_view k, std::string_view v) { c.member = to_f64(k, v); }, \
        [](const TrainConfig& c) { return fmt_f64(c.member); }                            \
  }
#define SOUP_BOOL_FIELD(member)                                                           \
  Field {                                                                                 \
    [](TrainConfig& c, std::string_view k, std::string_view v) { c.member = to_bool(k, v); }, \
        [](const TrainConfig& c) { return fmt_bool(c.member); }                           \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"algorithm",
       {[](TrainConfig& c, std::string_view k, std::string_view v) {
          if (v == "on_policy") c.algorithm = Algorithm::on_policy;
          else if (v == "soup") c.algorithm = Algorithm::soup;
          else bad_value(k, v, "on_policy|soup");
        },
        [](const TrainConfig& c) { return std::string(algorithm_name(c.algorithm)); }}},
      {"seed", SOUP_SIZE_FIELD(seed)},
      {"total_steps", SOUP_SIZE_FIELD(total_steps)},
      {"batch_size", SOUP_SIZE_FIELD(batch_size)},
      {"G", SOUP_SIZE_FIELD(group_size)},
      {"T", SOUP_SIZE_FIELD(refresh_interval)},
      {"strategy.kind",
       {[](TrainConfig& c, std::string_view k, std::string_view v) {
          try {
            c.strategy.kind = parse_truncation_kind(v);
          } catch (const std::invalid_argument&) {
            bad_value(k, v, "length_ratio|entropy_topk");
          }
        },
        [](const TrainConfig& c) { return std::string(truncation_kind_name(c.strategy.kind)); }}},
      {"strategy.ratio", SOUP_REAL_FIELD(strategy.ratio)},
      {"strategy.k", SOUP_INT_FIELD(strategy.k)},
      {"strategy.prefix_budget", SOUP_SIZE_FIELD(strategy.prefix_budget)},
      {"clip.eps_low", SOUP_REAL_FIELD(clip.eps_low)},
      {"clip.eps_high", SOUP_REAL_FIELD(clip.eps_high)},
      {"optim.base_lr", SOUP_REAL_FIELD(optim.base_lr)},
      {"optim.warmup_steps", SOUP_INT_FIELD(optim.warmup_steps)},
      {"optim.weight_decay", SOUP_REAL_FIELD(optim.weight_decay)},
      {"optim.grad_clip_norm", SOUP_REAL_FIELD(optim.grad_clip_norm)},
      {"optim.beta1", SOUP_REAL_FIELD(optim.beta1)},
      {"optim.beta2", SOUP_REAL_FIELD(optim.beta2)},
      {"optim.epsilon", SOUP_REAL_FIELD(optim.epsilon)},
      {"mini_batch.enabled", SOUP_BOOL_FIELD(mini_batch.enabled)},
      {"mini_batch.minibatch_size", SOUP_SIZE_FIELD(mini_batch.minibatch_size)},
      {"mini_batch.gather_size", SOUP_SIZE_FIELD(mini_batch.gather_size)},
      {"max_resp_len", SOUP_SIZE_FIELD(max_resp_len)},
      {"temperature", SOUP_REAL_FIELD(temperature)},
      {"eval_temperature", SOUP_REAL_FIELD(eval_temperature)},
      {"eval_k", SOUP_SIZE_FIELD(eval_k)},
      {"filter_groups", SOUP_BOOL_FIELD(filter_groups)},
      {"max_regen_batches", SOUP_SIZE_FIELD(max_regen_batches)},
      {"epsilon_std", SOUP_REAL_FIELD(epsilon_std)},
      {"checkpoint_every", SOUP_SIZE_FIELD(checkpoint_every)},
      {"dump_trajectories", SOUP_BOOL_FIELD(dump_trajectories)},
      {"init_scale", SOUP_REAL_FIELD(init_scale)},
      {"arch.window", SOUP_INT_FIELD(window)},
      {"arch.embed_dim", SOUP_INT_FIELD(embed_dim)},
      {"arch.hidden_dim", SOUP_INT_FIELD(hidden_dim)},
      {"task.kind",
       {[](TrainConfig& c, std::string_view k, std::string_view v) {
          try {
            c.task.spec.kind = parse_task_kind(v);
          } catch (const std::invalid_argument&) {
            bad_value(k, v, "mod_sum|reverse|sort");
          }
        },
        [](const TrainConfig& c) { return std::string(task_kind_name(c.task.spec.kind)); }}},
      {"task.difficulty", SOUP_INT_FIELD(task.spec.difficulty)},
      {"task.eval_size", SOUP_SIZE_FIELD(task.eval_size)},
      {"task.split_seed", SOUP_SIZE_FIELD(task.split_seed)},
      {"kl.use_kl_loss", SOUP_BOOL_FIELD(kl.use_kl_loss)},
      {"kl.kl_loss_coeff", SOUP_REAL_FIELD(kl.kl_loss_coeff)},
      {"kl.use_kl_in_reward", SOUP_BOOL_FIELD(kl.use_kl_in_reward)},
      {"kl.kl_coeff", SOUP_REAL_FIELD(kl.kl_coeff)},
  };
  return table;
}

#undef SOUP_SIZE_FIELD
#undef SOUP_INT_FIELD
#undef SOUP_REAL_FIELD
#undef SOUP_BOOL_FIELD

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void TrainConfig::validate() const {
  try {
    if (group_size < 2) throw ConfigError("G must be at least 2");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (refresh_interval < 1) throw ConfigError("T must be at least 1");
    if (max_resp_len < 1) throw ConfigError("max_resp_len must be at least 1");
    if (strategy.prefix_budget >= max_resp_len && strategy.prefix_budget > 0) {
      throw ConfigError("strategy.prefix_budget must be below max_resp_len");
    }
    if (mini_batch.enabled) {
      if (mini_batch.minibatch_size < 1 || mini_batch.gather_size < 1 ||
          mini_batch.gather_size % mini_batch.minibatch_size != 0) {
        throw ConfigError("mini_batch.gather_size must be a positive multiple of minibatch_size");
      }
    }
    if (!(temperature > 0.0) || !(eval_temperature > 0.0)) {
      throw ConfigError("temperatures must be positive");
    }
    if (eval_k < 1) throw ConfigError("eval_k must be at least 1");
    if (!(epsilon_std > 0.0)) throw ConfigError("epsilon_std must be positive");
    if (kl.use_kl_loss || kl.use_kl_in_reward || kl.kl_loss_coeff != 0.0 || kl.kl_coeff != 0.0) {
      throw ConfigError("KL penalties are not supported; keep kl.* disabled");
    }
    if (filter_groups && max_regen_batches < 1) {
      throw ConfigError("max_regen_batches must be at least 1 when filter_groups is on");
    }
    strategy.validate();
    clip.validate();
    optim.validate();
    architecture().validate();
    task.spec.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

PolicyArchitecture TrainConfig::architecture() const {
  return PolicyArchitecture::for_vocabulary(Vocabulary::digits(), window, embed_dim, hidden_dim);
}

RolloutSettings TrainConfig::rollout_settings() const {
  RolloutSettings s;
  s.group_size = group_size;
  s.strategy = strategy;
  s.max_len = max_resp_len;
  s.temperature = temperature;
  return s;
}

ObjectiveSettings TrainConfig::objective_settings() const {
  ObjectiveSettings s;
  s.clip = clip;
  s.epsilon_std = epsilon_std;
  s.temperature = temperature;
  s.filter_groups = filter_groups;
  return s;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, f] : fields()) out.push_back(name);
  return out;
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  field(key).set(cfg, key, value);
}

std::string get_config_value(const TrainConfig& cfg, std::string_view key) {
  return field(key).get(cfg);
}

void apply_override(TrainConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  const auto key = trim(assignment.substr(0, eq));
  const auto value = trim(assignment.substr(eq + 1));
  if (key.empty()) throw ConfigError("override '" + std::string(assignment) + "' has no key");
  set_config_value(cfg, key, value);
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    try {
      apply_override(base, body);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + "=" + f.get(cfg) + "\n";
  return out;
}

TrainConfig preset(std::string_view name) {
  TrainConfig c;
  if (name == "default") return c;
  if (name == "desk_minibatch") {
    c.algorithm = Algorithm::on_policy;
    c.mini_batch = {true, 32, 256};
    return c;
  }
  if (name == "paper_minibatch") {
    c.algorithm = Algorithm::on_policy;
    c.mini_batch = {true, 32, 512};
    return c;
  }
  if (name == "paper_scale") {
    c.optim.base_lr = 1e-6;
    c.max_resp_len = 3072;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
  return {"default", "desk_minibatch", "paper_minibatch", "paper_scale"};
}

}  // namespace soup
