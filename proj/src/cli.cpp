#include "soup/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "soup/checkpoint.hpp"
#include "soup/config.hpp"
#include "soup/eval.hpp"
#include "soup/gradcheck.hpp"
#include "soup/trainer.hpp"
#include "soup/trajectory_io.hpp"

namespace soup::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::string output_dir;
  std::string preset_name = "default";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, CommonOptions& opts, const std::string& default_dir) {
  opts.output_dir = default_dir;
  app->add_option("--config", opts.config_path, "key=value run configuration");
  app->add_option("--output-dir", opts.output_dir, "artifact directory")->capture_default_str();
  app->add_option("--preset", opts.preset_name, "base preset applied before the config file")
      ->capture_default_str();
  app->add_option("--override", opts.overrides, "key=value, repeatable, last one wins");
}

// Preset, then file, then overrides. Override problems are usage errors;
// problems inside the file are config errors.
TrainConfig resolve_config(const CommonOptions& opts, bool config_required) {
  TrainConfig cfg;
  try {
    cfg = preset(opts.preset_name);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (opts.config_path.empty()) {
    if (config_required) throw UsageError("--config is required");
  } else {
    if (!fs::exists(opts.config_path)) {
      throw UsageError("config file not found: " + opts.config_path);
    }
    cfg = load_config(opts.config_path, cfg);
  }
  for (const auto& o : opts.overrides) {
    try {
      apply_override(cfg, o);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("invalid override: ") + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

fs::path prepare_output(const CommonOptions& opts, const TrainConfig& cfg) {
  const fs::path dir = opts.output_dir;
  fs::create_directories(dir);
  std::ofstream eff(dir / "effective.cfg");
  if (!eff) throw std::runtime_error("cannot write " + (dir / "effective.cfg").string());
  eff << to_text(cfg);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

json report_json(const EvalReport& r) {
  json pass = json::object();
  for (const auto& [k, v] : r.pass_at) pass[std::to_string(k)] = v;
  return {{"sample_count", r.sample_count}, {"instance_count", r.instance_count},
          {"avg_at_n", r.avg_at_n},         {"pass_at", pass},
          {"correct_counts", r.correct_counts}, {"seeds", r.seeds}};
}

std::vector<Instance> eval_set_for(const TrainConfig& cfg, const std::string& path) {
  if (!path.empty()) return read_eval_set(path);
  return make_eval_set(cfg.task.spec, cfg.task.eval_size, cfg.task.split_seed);
}

PassEstimator parse_estimator(const std::string& s) {
  if (s == "unbiased") return PassEstimator::unbiased;
  if (s == "empirical") return PassEstimator::empirical;
  throw UsageError("unknown estimator: " + s);
}

std::vector<std::size_t> default_k_list(std::size_t n) {
  std::vector<std::size_t> ks;
  for (std::size_t k = 1; k <= n; k *= 2) ks.push_back(k);
  if (ks.back() != n) ks.push_back(n);
  return ks;
}

void check_k_list(const std::vector<std::size_t>& ks, std::size_t n) {
  for (auto k : ks) {
    if (k < 1 || k > n) throw UsageError("every --k must lie in [1, n]");
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed-policy RL training on synthetic digit tasks", "soup"};
  app.require_subcommand(1);

  CommonOptions train_opts, eval_opts, relay_opts, diag_opts;

  auto* train = app.add_subcommand("train", "run training and write checkpoints and metrics");
  add_common(train, train_opts, "runs/train");

  auto* eval = app.add_subcommand("eval", "avg@k and pass@k of one checkpoint");
  add_common(eval, eval_opts, "runs/eval");
  std::string eval_ckpt, eval_set_path, estimator_name = "unbiased";
  std::optional<std::size_t> eval_n;
  std::vector<std::size_t> eval_ks;
  std::uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--eval-set", eval_set_path, "eval set file (default: regenerate)");
  eval->add_option("--n", eval_n, "samples per instance (default eval_k)");
  eval->add_option("--k", eval_ks, "pass@k values")->delimiter(',');
  eval->add_option("--estimator", estimator_name, "unbiased or empirical")->capture_default_str();
  eval->add_option("--seed", eval_seed, "sampling seed (default: config seed)");

  auto* relay = app.add_subcommand("relay", "relay sampling between two checkpoints");
  add_common(relay, relay_opts, "runs/relay");
  std::string relay_behavior, relay_current, relay_run_dir, relay_set_path;
  std::string relay_estimator = "unbiased";
  double relay_ratio = 0.5;
  std::size_t relay_n = 32;
  std::vector<std::size_t> relay_ks;
  std::uint64_t relay_seed = 0;
  relay->add_option("--behavior", relay_behavior, "checkpoint supplying prefixes");
  relay->add_option("--current", relay_current, "checkpoint supplying continuations");
  relay->add_option("--run-dir", relay_run_dir,
                    "training run; picks the best checkpoint and the best one before it");
  relay->add_option("--eval-set", relay_set_path, "eval set file (default: regenerate)");
  relay->add_option("--ratio", relay_ratio, "prefix length ratio")->capture_default_str();
  relay->add_option("--n", relay_n, "samples per instance and arm")->capture_default_str();
  relay->add_option("--k", relay_ks, "pass@k values")->delimiter(',');
  relay->add_option("--estimator", relay_estimator, "unbiased or empirical")
      ->capture_default_str();
  relay->add_option("--seed", relay_seed, "sampling seed (default: config seed)");

  auto* diag = app.add_subcommand("diag", "positional entropy/clip bins of a trajectory dump");
  add_common(diag, diag_opts, "runs/diag");
  std::string diag_dump;
  std::int64_t diag_from = 0;
  diag->add_option("--dump", diag_dump, "trajectories.jsonl from a training run")->required();
  diag->add_option("--from-step", diag_from, "ignore records before this step");

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of the gradient");
  GradCheckOptions gc;
  double gc_tol = 1e-4;
  grad->add_option("--cases", gc.cases, "random configurations")->capture_default_str();
  grad->add_option("--seed", gc.seed, "seed")->capture_default_str();
  grad->add_option("--tol", gc_tol, "maximum accepted relative error")->capture_default_str();

  if (args.size() <= 1) {
    err << app.help();
    return kExitUsage;
  }
  try {
    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
    app.parse(std::move(rest));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*train) {
      const TrainConfig cfg = resolve_config(train_opts, true);
      const fs::path dir = prepare_output(train_opts, cfg);
      const RunResult r = run_training(cfg, dir);
      const auto& last = r.metrics.back();
      out << "steps " << r.metrics.size() << "  final mean_reward " << last.mean_reward
          << "\n";
      for (const auto& s : r.scores) {
        out << "step " << s.step << "  avg@" << cfg.eval_k << " " << s.score << "\n";
      }
      out << "final checkpoint " << r.final_checkpoint.string() << "\n"
          << "best checkpoint " << r.best_checkpoint.string() << "\n";
      return kExitOk;
    }

    if (*eval) {
      const TrainConfig cfg = resolve_config(eval_opts, false);
      const fs::path dir = prepare_output(eval_opts, cfg);
      const PassEstimator est = parse_estimator(estimator_name);
      const std::size_t n = eval_n.value_or(cfg.eval_k);
      if (n < 1) throw UsageError("--n must be at least 1");
      if (eval_ks.empty()) eval_ks = default_k_list(n);
      check_k_list(eval_ks, n);
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const auto set = eval_set_for(cfg, eval_set_path);
      const std::uint64_t seed = eval_seed ? eval_seed : cfg.seed;
      const SamplingSettings sampling{cfg.max_resp_len, cfg.eval_temperature};
      const auto rows = sample_correctness(ckpt.params, ckpt.arch, set, n, sampling,
                                           Rng(seed).derive("eval"));
      const EvalReport rep = make_report(rows, eval_ks, est, seed);
      json j = report_json(rep);
      j["checkpoint"] = eval_ckpt;
      j["step"] = ckpt.global_step;
      j["temperature"] = cfg.eval_temperature;
      j["estimator"] = estimator_name;
      write_json(dir / "eval_report.json", j);
      out << "avg@" << n << " " << rep.avg_at_n << "\n";
      for (const auto& [k, v] : rep.pass_at) out << "pass@" << k << " " << v << "\n";
      return kExitOk;
    }

    if (*relay) {
      const TrainConfig cfg = resolve_config(relay_opts, false);
      const fs::path dir = prepare_output(relay_opts, cfg);
      const PassEstimator est = parse_estimator(relay_estimator);
      if (!(relay_ratio > 0.0 && relay_ratio < 1.0)) throw UsageError("--ratio must be in (0, 1)");
      if (relay_n < 1) throw UsageError("--n must be at least 1");
      if (!relay_run_dir.empty()) {
        std::ifstream index(fs::path(relay_run_dir) / "checkpoints" / "index.jsonl");
        if (!index) throw UsageError("no checkpoints/index.jsonl under " + relay_run_dir);
        std::vector<CheckpointScore> scores;
        std::vector<std::string> paths;
        std::string line;
        while (std::getline(index, line)) {
          if (line.empty()) continue;
          const json j = json::parse(line);
          scores.push_back({j.at("step").get<std::int64_t>(), j.at("avg_at_k").get<double>()});
          paths.push_back(
              (fs::path(relay_run_dir) / "checkpoints" / j.at("path").get<std::string>())
                  .string());
        }
        const auto [best, prior] = select_relay_pair(scores);
        if (best < 0 || prior < 0) {
          throw std::runtime_error("run has no checkpoint earlier than its best one");
        }
        relay_current = paths[static_cast<std::size_t>(best)];
        relay_behavior = paths[static_cast<std::size_t>(prior)];
      }
      if (relay_behavior.empty() || relay_current.empty()) {
        throw UsageError("relay needs --behavior and --current, or --run-dir");
      }
      if (relay_ks.empty()) relay_ks = default_k_list(relay_n);
      check_k_list(relay_ks, relay_n);
      const Checkpoint behavior = load_checkpoint(relay_behavior);
      const Checkpoint current = load_checkpoint(relay_current);
      if (!(behavior.arch == current.arch)) {
        throw std::runtime_error("relay checkpoints have different architectures");
      }
      const auto set = eval_set_for(cfg, relay_set_path);
      const std::uint64_t seed = relay_seed ? relay_seed : cfg.seed;
      const SamplingSettings sampling{cfg.max_resp_len, cfg.eval_temperature};
      const RelayReport rep =
          relay_inference(behavior.params, current.params, current.arch, set, relay_ratio,
                          relay_n, relay_ks, sampling, Rng(seed).derive("relay"), est);
      write_relay_csv(dir / "relay.csv", rep);
      json j;
      j["behavior"] = relay_behavior;
      j["current"] = relay_current;
      j["behavior_step"] = behavior.global_step;
      j["current_step"] = current.global_step;
      j["ratio"] = relay_ratio;
      j["estimator"] = relay_estimator;
      j["relay"] = report_json(rep.relay);
      j["single"] = report_json(rep.single);
      write_json(dir / "relay_report.json", j);
      out << "k,relay_pass,single_pass,diff\n";
      for (const auto& p : rep.curve) {
        out << p.k << ',' << p.relay << ',' << p.single << ',' << p.diff << '\n';
      }
      return kExitOk;
    }

    if (*diag) {
      const TrainConfig cfg = resolve_config(diag_opts, false);
      const fs::path dir = prepare_output(diag_opts, cfg);
      const auto records = read_trajectory_dump(diag_dump);
      std::vector<Trajectory> trajs;
      std::vector<std::vector<bool>> clipped;
      for (const auto& r : records) {
        if (r.step < diag_from) continue;
        trajs.push_back(r.trajectory);
        clipped.push_back(r.clipped.empty() ? std::vector<bool>(r.trajectory.size(), false)
                                            : r.clipped);
      }
      if (trajs.empty()) throw std::runtime_error("no trajectories selected from " + diag_dump);
      const PositionBinStats bins = position_bin_diagnostics(trajs, clipped);
      const auto hist = truncation_token_histogram(trajs);
      const Vocabulary vocab = Vocabulary::digits();
      json jb = json::array();
      std::array<double, 10> entropies{};
      std::ofstream csv(dir / "position_bins.csv");
      if (!csv) throw std::runtime_error("cannot write position_bins.csv");
      csv.precision(17);
      csv << "bin,mean_entropy,clip_fraction,tokens\n";
      for (std::size_t b = 0; b < 10; ++b) {
        const auto& bin = bins.bins[b];
        entropies[b] = bin.mean_entropy;
        jb.push_back({{"bin", b},
                      {"mean_entropy", number_or_null(bin.mean_entropy)},
                      {"clip_fraction", bin.clip_fraction},
                      {"tokens", bin.tokens}});
        csv << b << ',' << bin.mean_entropy << ',' << bin.clip_fraction << ',' << bin.tokens
            << '\n';
      }
      json jh = json::object();
      for (const auto& [tok, count] : hist) jh[vocab.symbol(tok)] = count;
      json j;
      j["dump"] = diag_dump;
      j["trajectories"] = trajs.size();
      j["bins"] = jb;
      j["entropy_slope"] = decile_slope(entropies);
      j["truncation_histogram"] = jh;
      write_json(dir / "diag_report.json", j);
      out << "trajectories " << trajs.size() << "  entropy slope "
          << decile_slope(entropies) << "\n";
      for (std::size_t b = 0; b < 10; ++b) {
        out << "bin " << b << "  entropy " << bins.bins[b].mean_entropy << "  clip "
            << bins.bins[b].clip_fraction << "\n";
      }
      return kExitOk;
    }

    if (*grad) {
      const GradCheckReport rep = run_grad_check(gc);
      for (std::size_t i = 0; i < rep.cases.size(); ++i) {
        const auto& c = rep.cases[i];
        out << "case " << i << "  E=" << c.embed_dim << " H=" << c.hidden_dim
            << "  params " << c.param_count << "  checked " << c.checked << "  tokens "
            << c.tokens << " (prefix " << c.prefix_tokens << ", clipped " << c.clipped_tokens
            << ")  max rel err " << c.max_rel_error << "\n";
      }
      out << "max relative error " << rep.max_rel_error << "\n";
      if (!(rep.max_rel_error < gc_tol)) {
        err << "gradient check failed: " << rep.max_rel_error << " >= " << gc_tol << "\n";
        return kExitRuntime;
      }
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace soup::cli
