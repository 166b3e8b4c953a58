#include "soup/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "soup/checkpoint.hpp"
#include "soup/trajectory_io.hpp"

namespace soup {

namespace {

using json = nlohmann::json;

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

double read_number(const json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? nan_value() : v.get<double>();
}

std::string step_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06lld.ckpt", static_cast<long long>(step));
  return buf;
}

}  // namespace

std::string MetricsRecord::to_json_line() const {
  json j;
  j["step"] = step;
  j["mode"] = mode;
  j["mean_reward"] = mean_reward;
  j["loss"] = loss;
  j["clip_frac"] = clip_frac;
  j["clip_frac_prefix"] = clip_frac_prefix;
  j["clip_frac_suffix"] = clip_frac_suffix;
  for (std::size_t b = 0; b < 10; ++b) {
    j["entropy_decile_" + std::to_string(b)] = number_or_null(entropy_decile[b]);
  }
  for (std::size_t b = 0; b < 10; ++b) {
    j["clip_decile_" + std::to_string(b)] = number_or_null(clip_decile[b]);
  }
  j["lr"] = lr;
  j["grad_norm"] = grad_norm;
  j["mean_entropy"] = mean_entropy;
  j["max_onpolicy_ratio_dev"] = max_onpolicy_ratio_dev;
  j["mean_response_len"] = mean_response_len;
  j["tokens"] = tokens;
  j["clipped_tokens"] = clipped_tokens;
  j["groups"] = groups;
  j["regen_rounds"] = regen_rounds;
  j["updates"] = updates;
  return j.dump(-1, ' ', false, json::error_handler_t::strict);
}

MetricsRecord MetricsRecord::from_json_line(const std::string& line) {
  const json j = json::parse(line);
  MetricsRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.mode = j.at("mode").get<std::string>();
  r.mean_reward = read_number(j, "mean_reward");
  r.loss = read_number(j, "loss");
  r.clip_frac = read_number(j, "clip_frac");
  r.clip_frac_prefix = read_number(j, "clip_frac_prefix");
  r.clip_frac_suffix = read_number(j, "clip_frac_suffix");
  for (std::size_t b = 0; b < 10; ++b) {
    r.entropy_decile[b] = read_number(j, ("entropy_decile_" + std::to_string(b)).c_str());
    r.clip_decile[b] = read_number(j, ("clip_decile_" + std::to_string(b)).c_str());
  }
  r.lr = read_number(j, "lr");
  r.grad_norm = read_number(j, "grad_norm");
  r.mean_entropy = read_number(j, "mean_entropy");
  r.max_onpolicy_ratio_dev = read_number(j, "max_onpolicy_ratio_dev");
  r.mean_response_len = read_number(j, "mean_response_len");
  r.tokens = j.at("tokens").get<std::size_t>();
  r.clipped_tokens = j.at("clipped_tokens").get<std::size_t>();
  r.groups = j.at("groups").get<std::size_t>();
  r.regen_rounds = j.at("regen_rounds").get<std::size_t>();
  r.updates = j.at("updates").get<std::size_t>();
  return r;
}

TrainerState init_trainer(const TrainConfig& cfg) {
  cfg.validate();
  Rng init_rng = Rng(cfg.seed).derive("init");
  TrainerState state;
  state.params = init_params(cfg.architecture(), init_rng, cfg.init_scale);
  state.optimizer = OptimizerState::zeros(state.params.size());
  state.cycle.behavior_params = snapshot(state.params);
  state.cycle.batch_in_cycle = 1;
  state.cycle.global_step = 0;
  return state;
}

RolloutMode mode_for(const TrainConfig& cfg, const CycleState& cycle) {
  if (cfg.algorithm == Algorithm::on_policy || cycle.batch_in_cycle == 1) {
    return RolloutMode::on_policy;
  }
  return RolloutMode::soup;
}

void refresh_behavior(CycleState& state, const ParamVector& current_params) {
  state.behavior_params = snapshot(current_params);
  state.batch_in_cycle = 1;
}

std::vector<GroupRollout> collect_groups(const TrainConfig& cfg, const CycleState& cycle,
                                         const ParamVector& reference_params, RolloutMode mode,
                                         std::size_t prompt_count, const Rng& step_rng,
                                         std::size_t* rounds_used) {
  const auto arch = cfg.architecture();
  const auto settings = cfg.rollout_settings();
  const std::size_t max_rounds = cfg.filter_groups ? cfg.max_regen_batches : 1;
  std::vector<GroupRollout> kept;
  kept.reserve(prompt_count);
  std::size_t round = 0;
  while (round < max_rounds && kept.size() < prompt_count) {
    const Rng round_rng = step_rng.derive("round", round);
    ++round;
    for (std::size_t i = 0; i < prompt_count && kept.size() < prompt_count; ++i) {
      Rng inst_rng = round_rng.derive("instance", i);
      const Instance inst = generate_instance(cfg.task.spec, inst_rng);
      GroupRollout group = rollout_group(inst, mode, cycle.behavior_params, reference_params,
                                         arch, settings, round_rng.derive("group", i));
      if (cfg.filter_groups && !group_filter(group.rewards, cfg.group_size)) continue;
      kept.push_back(std::move(group));
    }
  }
  if (rounds_used) *rounds_used = round;
  if (kept.empty()) {
    throw EmptyBatchError("step " + std::to_string(cycle.global_step) +
                          ": every group was all-correct or all-wrong after " +
                          std::to_string(round) + " sampling rounds");
  }
  return kept;
}

UpdateSummary apply_update(std::span<const GroupRollout> groups, ParamVector& params,
                           OptimizerState& optimizer, const TrainConfig& cfg,
                           const UpdateObserver& observer, std::int64_t step, RolloutMode mode,
                           std::size_t minibatch_index) {
  const auto arch = cfg.architecture();
  const auto settings = cfg.objective_settings();
  const BatchObjective obj = batch_objective(groups, params, arch, settings);
  if (observer) observer(UpdateView{step, mode, minibatch_index, groups, obj});

  const ParamVector grad = assemble_gradient(groups, params, arch, obj, settings.temperature);
  UpdateSummary out;
  out.updates = 1;
  out.loss_sum = obj.loss;
  out.grad_norm_sum = grad.norm();
  out.first_lr = lr_at_step(optimizer.step_count, cfg.optim);
  out.stats = obj.stats;
  const ParamVector clipped = clip_global_norm(grad, cfg.optim.grad_clip_norm);
  adamw_step(params, clipped, optimizer, cfg.optim);
  if (!params.all_finite()) {
    throw NumericalError("step " + std::to_string(step) + ": parameters became non-finite");
  }
  return out;
}

UpdateSummary mini_batch_update(std::span<const GroupRollout> gathered, ParamVector& params,
                                OptimizerState& optimizer, const TrainConfig& cfg,
                                const UpdateObserver& observer, std::int64_t step,
                                RolloutMode mode) {
  const std::size_t mb = cfg.mini_batch.minibatch_size;
  if (mb < 1) throw std::invalid_argument("minibatch_size must be at least 1");
  UpdateSummary total;
  std::size_t index = 0;
  for (std::size_t begin = 0; begin < gathered.size(); begin += mb, ++index) {
    const std::size_t count = std::min(mb, gathered.size() - begin);
    const auto part = apply_update(gathered.subspan(begin, count), params, optimizer, cfg,
                                   observer, step, mode, index);
    if (total.updates == 0) total.first_lr = part.first_lr;
    total.updates += part.updates;
    total.loss_sum += part.loss_sum;
    total.grad_norm_sum += part.grad_norm_sum;
    total.stats.merge(part.stats);
  }
  return total;
}

MetricsRecord train_step(TrainerState& state, const TrainConfig& cfg, const Rng& run_rng,
                         const UpdateObserver& observer) {
  auto& cycle = state.cycle;
  const std::int64_t step = cycle.global_step;
  const RolloutMode mode = mode_for(cfg, cycle);
  const Rng step_rng = run_rng.derive("step", static_cast<std::uint64_t>(step));
  const std::size_t prompts =
      cfg.mini_batch.enabled ? cfg.mini_batch.gather_size : cfg.batch_size;

  std::size_t rounds = 0;
  const auto groups =
      collect_groups(cfg, cycle, state.params, mode, prompts, step_rng, &rounds);

  const UpdateSummary summary =
      cfg.mini_batch.enabled
          ? mini_batch_update(groups, state.params, state.optimizer, cfg, observer, step, mode)
          : apply_update(groups, state.params, state.optimizer, cfg, observer, step, mode, 0);

  MetricsRecord rec;
  rec.step = step;
  rec.mode = std::string(rollout_mode_name(mode));
  double reward_sum = 0.0;
  std::size_t traj_count = 0;
  std::size_t len_sum = 0;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
      reward_sum += g.rewards[i];
      len_sum += g.trajectories[i].size();
      ++traj_count;
    }
  }
  rec.mean_reward = reward_sum / static_cast<double>(traj_count);
  rec.mean_response_len = static_cast<double>(len_sum) / static_cast<double>(traj_count);
  const double updates = static_cast<double>(summary.updates);
  rec.loss = summary.loss_sum / updates;
  rec.grad_norm = summary.grad_norm_sum / updates;
  rec.lr = summary.first_lr;
  const ClipStats& st = summary.stats;
  rec.clip_frac = st.clip_fraction();
  rec.clip_frac_prefix = st.prefix_clip_fraction();
  rec.clip_frac_suffix = st.suffix_clip_fraction();
  double entropy_total = 0.0;
  for (std::size_t b = 0; b < 10; ++b) {
    entropy_total += st.decile_entropy_sum[b];
    if (st.decile_tokens[b] == 0) {
      rec.entropy_decile[b] = nan_value();
      rec.clip_decile[b] = nan_value();
      continue;
    }
    const auto n = static_cast<double>(st.decile_tokens[b]);
    rec.entropy_decile[b] = st.decile_entropy_sum[b] / n;
    rec.clip_decile[b] = static_cast<double>(st.decile_clipped[b]) / n;
  }
  rec.tokens = st.total_tokens();
  rec.clipped_tokens = st.clipped_tokens();
  rec.mean_entropy = rec.tokens ? entropy_total / static_cast<double>(rec.tokens) : 0.0;
  rec.max_onpolicy_ratio_dev = st.max_suffix_ratio_deviation;
  rec.groups = groups.size();
  rec.regen_rounds = rounds;
  rec.updates = summary.updates;

  cycle.global_step = step + 1;
  if (cycle.batch_in_cycle >= cfg.refresh_interval) {
    refresh_behavior(cycle, state.params);
  } else {
    ++cycle.batch_in_cycle;
  }
  return rec;
}

RunResult run_training(const TrainConfig& cfg, const std::filesystem::path& output_dir,
                       const UpdateObserver& observer) {
  namespace fs = std::filesystem;
  cfg.validate();
  const auto arch = cfg.architecture();
  const fs::path ckpt_dir = output_dir / "checkpoints";
  std::error_code ec;
  fs::create_directories(ckpt_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + ckpt_dir.string() + ": " + ec.message());

  {
    std::ofstream eff(output_dir / "effective.cfg");
    if (!eff) throw std::runtime_error("cannot write effective.cfg in " + output_dir.string());
    eff << to_text(cfg);
  }
  const auto eval_set = make_eval_set(cfg.task.spec, cfg.task.eval_size, cfg.task.split_seed);
  write_eval_set(output_dir / "eval_set.txt", eval_set);

  RunResult result;
  result.metrics_log = output_dir / "metrics.log";
  std::ofstream metrics(result.metrics_log, std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + result.metrics_log.string());
  std::ofstream index(ckpt_dir / "index.jsonl", std::ios::trunc);
  if (!index) throw std::runtime_error("cannot write checkpoint index in " + ckpt_dir.string());
  std::ofstream dump;
  if (cfg.dump_trajectories) {
    dump.open(output_dir / "trajectories.jsonl", std::ios::trunc);
    if (!dump) throw std::runtime_error("cannot write trajectories.jsonl");
  }

  const Rng run_rng(cfg.seed);
  const Rng eval_rng = run_rng.derive("eval");
  const SamplingSettings sampling{cfg.max_resp_len, cfg.eval_temperature};

  UpdateObserver step_observer = observer;
  if (cfg.dump_trajectories) {
    step_observer = [&](const UpdateView& view) {
      if (observer) observer(view);
      for (std::size_t g = 0; g < view.groups.size(); ++g) {
        const auto& group = view.groups[g];
        for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
          TrajectoryRecord rec;
          rec.step = view.step;
          rec.group = g;
          rec.index = i;
          rec.answer = group.instance.answer;
          rec.trajectory = group.trajectories[i];
          rec.reward = group.rewards[i];
          if (view.objective.kept[g]) {
            for (const auto& tok : view.objective.terms[g][i].tokens) {
              rec.clipped.push_back(tok.clipped_active);
            }
          } else {
            rec.clipped.assign(rec.trajectory.size(), false);
          }
          dump << to_json_line(rec) << '\n';
        }
      }
    };
  }

  TrainerState state = init_trainer(cfg);
  auto save_and_score = [&](std::int64_t step) {
    const fs::path path = ckpt_dir / step_name(step);
    try {
      save_checkpoint({arch, Vocabulary::digits(), state.params, state.optimizer, step}, path);
    } catch (const CheckpointError& e) {
      throw std::runtime_error("step " + std::to_string(step) + ": " + e.what());
    }
    const double score = avg_at_k(state.params, arch, eval_set, cfg.eval_k, sampling, eval_rng);
    result.scores.push_back({step, score});
    result.checkpoints.push_back(path);
    json line;
    line["step"] = step;
    line["avg_at_k"] = score;
    line["k"] = cfg.eval_k;
    line["path"] = path.filename().string();
    index << line.dump() << '\n' << std::flush;
    return path;
  };

  for (std::size_t s = 0; s < cfg.total_steps; ++s) {
    MetricsRecord rec = train_step(state, cfg, run_rng, step_observer);
    metrics << rec.to_json_line() << '\n' << std::flush;
    if (!metrics) {
      throw std::runtime_error("step " + std::to_string(rec.step) + ": metrics write failed");
    }
    result.metrics.push_back(std::move(rec));
    const auto done = state.cycle.global_step;
    if (cfg.checkpoint_every > 0 && done % static_cast<std::int64_t>(cfg.checkpoint_every) == 0 &&
        s + 1 < cfg.total_steps) {
      save_and_score(done);
    }
  }
  result.final_checkpoint = save_and_score(state.cycle.global_step);

  const auto [best, prior] = select_relay_pair(result.scores);
  (void)prior;
  result.best_checkpoint = ckpt_dir / "best.ckpt";
  fs::copy_file(result.checkpoints[static_cast<std::size_t>(best)], result.best_checkpoint,
                fs::copy_options::overwrite_existing, ec);
  if (ec) throw std::runtime_error("cannot write best.ckpt: " + ec.message());
  result.final_state = std::move(state);
  return result;
}

std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(MetricsRecord::from_json_line(line));
  }
  return out;
}

}  // namespace soup
