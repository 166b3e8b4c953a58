#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "soup/checkpoint.hpp"
#include "soup/trainer.hpp"
#include "soup/trajectory_io.hpp"

using namespace soup;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.group_size = 4;
  c.max_resp_len = 8;
  c.refresh_interval = 3;
  c.total_steps = 6;
  c.embed_dim = 4;
  c.hidden_dim = 8;
  c.window = 4;
  c.init_scale = 0.5;
  c.task.spec = {TaskKind::mod_sum, 2};
  c.task.eval_size = 10;
  c.eval_k = 4;
  c.checkpoint_every = 2;
  c.optim.base_lr = 1e-2;
  c.optim.warmup_steps = 2;
  return c;
}

std::vector<MetricsRecord> run_steps(const TrainConfig& cfg, std::size_t steps,
                                     TrainerState& state, const UpdateObserver& obs = {}) {
  const Rng run_rng(cfg.seed);
  std::vector<MetricsRecord> out;
  for (std::size_t s = 0; s < steps; ++s) out.push_back(train_step(state, cfg, run_rng, obs));
  return out;
}

fs::path fresh_dir(const char* name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("init: seeded, snapshot equals params, zero optimizer") {
  const auto cfg = tiny_config();
  const auto a = init_trainer(cfg), b = init_trainer(cfg);
  CHECK(a.params == b.params);
  CHECK(a.cycle.behavior_params == a.params);
  CHECK(a.cycle.batch_in_cycle == 1);
  CHECK(a.optimizer.step_count == 0);
  auto other = cfg;
  other.seed = 2;
  CHECK_FALSE(init_trainer(other).params == a.params);
}

TEST_CASE("refresh copies the current parameters and restarts the cycle") {
  auto state = init_trainer(tiny_config());
  state.params[0] += 1.0;
  state.cycle.batch_in_cycle = 3;
  refresh_behavior(state.cycle, state.params);
  CHECK(state.cycle.behavior_params == state.params);
  CHECK(state.cycle.batch_in_cycle == 1);
  state.params[0] += 1.0;
  CHECK_FALSE(state.cycle.behavior_params == state.params);
}

TEST_CASE("cycle: first batch on-policy, the rest mixed, behavior frozen within a cycle") {
  auto cfg = tiny_config();
  cfg.refresh_interval = 3;
  auto state = init_trainer(cfg);
  const Rng run_rng(cfg.seed);
  ParamVector frozen = state.cycle.behavior_params;
  for (int s = 0; s < 9; ++s) {
    const std::size_t pos = static_cast<std::size_t>(s % 3) + 1;
    CHECK(state.cycle.batch_in_cycle == pos);
    if (pos == 1) {
      CHECK(state.cycle.behavior_params == state.params);
      frozen = state.cycle.behavior_params;
    } else {
      CHECK(state.cycle.behavior_params == frozen);
    }
    const auto rec = train_step(state, cfg, run_rng);
    CHECK(rec.mode == (pos == 1 ? "on_policy" : "soup"));
    CHECK(rec.step == s);
  }
  CHECK(state.cycle.global_step == 9);
}

TEST_CASE("on_policy algorithm never runs mixed batches") {
  auto cfg = tiny_config();
  cfg.algorithm = Algorithm::on_policy;
  auto state = init_trainer(cfg);
  for (const auto& rec : run_steps(cfg, 5, state)) {
    CHECK(rec.mode == "on_policy");
    CHECK(rec.clip_frac_prefix == 0.0);
  }
}

TEST_CASE("same config and seed give identical metrics streams") {
  const auto cfg = tiny_config();
  auto a = init_trainer(cfg), b = init_trainer(cfg);
  const auto ma = run_steps(cfg, 6, a), mb = run_steps(cfg, 6, b);
  for (std::size_t i = 0; i < ma.size(); ++i) CHECK(ma[i].to_json_line() == mb[i].to_json_line());
  CHECK(a.params == b.params);
}

TEST_CASE("T = 1 and ratio 0 reduce to the on-policy run") {
  auto base = tiny_config();
  base.algorithm = Algorithm::on_policy;
  auto on = init_trainer(base);
  const auto m_on = run_steps(base, 8, on);

  auto t1 = base;
  t1.algorithm = Algorithm::soup;
  t1.refresh_interval = 1;
  auto s1 = init_trainer(t1);
  const auto m_t1 = run_steps(t1, 8, s1);
  for (std::size_t i = 0; i < m_on.size(); ++i) CHECK(m_t1[i].to_json_line() == m_on[i].to_json_line());
  CHECK(s1.params == on.params);

  auto r0 = base;
  r0.algorithm = Algorithm::soup;
  r0.refresh_interval = 4;
  r0.strategy.ratio = 0.0;
  auto s0 = init_trainer(r0);
  const auto m_r0 = run_steps(r0, 8, s0);
  for (std::size_t i = 0; i < m_on.size(); ++i) {
    CHECK(m_r0[i].loss == m_on[i].loss);
    CHECK(m_r0[i].mean_reward == m_on[i].mean_reward);
    CHECK(m_r0[i].clip_frac_prefix == 0.0);
  }
  CHECK(s0.params == on.params);
}

TEST_CASE("without mini-batching every suffix token has ratio 1 at gradient time") {
  auto cfg = tiny_config();
  cfg.refresh_interval = 2;
  auto state = init_trainer(cfg);
  std::size_t seen = 0, prefix = 0;
  const UpdateObserver obs = [&](const UpdateView& view) {
    for (std::size_t g = 0; g < view.groups.size(); ++g) {
      const auto& trajs = view.groups[g].trajectories;
      for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto& terms = view.objective.terms[g][i];
        for (std::size_t t = 0; t < trajs[i].size(); ++t) {
          if (trajs[i].provenance[t] == Provenance::offpolicy_prefix) {
            ++prefix;
            continue;
          }
          CHECK(std::abs(terms.tokens[t].ratio - 1.0) < 1e-9);
          ++seen;
        }
      }
    }
  };
  const auto metrics = run_steps(cfg, 6, state, obs);
  CHECK(seen > 0);
  CHECK(prefix > 0);
  for (const auto& m : metrics) CHECK(m.max_onpolicy_ratio_dev < 1e-9);
}

TEST_CASE("mini-batching: one minibatch equals a plain update, later ones drift") {
  auto cfg = tiny_config();
  cfg.algorithm = Algorithm::on_policy;
  auto state = init_trainer(cfg);
  const Rng step_rng = Rng(5).derive("step", 0);
  const auto groups = collect_groups(cfg, state.cycle, state.params, RolloutMode::on_policy, 8,
                                     step_rng);
  REQUIRE(groups.size() == 8);

  auto single = cfg;
  single.mini_batch = {true, 8, 8};
  ParamVector p1 = state.params, p2 = state.params;
  OptimizerState o1 = state.optimizer, o2 = state.optimizer;
  o1.step_count = o2.step_count = 5;
  mini_batch_update(groups, p1, o1, single, {});
  apply_update(groups, p2, o2, single, {});
  CHECK(p1 == p2);

  auto split = cfg;
  split.mini_batch = {true, 2, 8};
  ParamVector p3 = state.params;
  OptimizerState o3 = state.optimizer;
  o3.step_count = 5;
  std::vector<double> max_dev;
  const UpdateObserver obs = [&](const UpdateView& view) {
    max_dev.push_back(view.objective.stats.max_suffix_ratio_deviation);
    CHECK(view.groups.size() == 2);
    CHECK(view.minibatch_index == max_dev.size() - 1);
  };
  const auto summary = mini_batch_update(groups, p3, o3, split, obs);
  CHECK(summary.updates == 4);
  CHECK(o3.step_count == 9);
  REQUIRE(max_dev.size() == 4);
  CHECK(max_dev[0] < 1e-9);
  CHECK(max_dev[1] > 1e-9);
}

TEST_CASE("mini-batch train step gathers gather_size prompts") {
  auto cfg = tiny_config();
  cfg.algorithm = Algorithm::on_policy;
  cfg.mini_batch = {true, 2, 6};
  auto state = init_trainer(cfg);
  const auto rec = run_steps(cfg, 1, state)[0];
  CHECK(rec.groups == 6);
  CHECK(rec.updates == 3);
  CHECK(state.optimizer.step_count == 3);
}

TEST_CASE("group filtering resamples and gives up with a diagnostic") {
  auto cfg = tiny_config();
  cfg.filter_groups = true;
  cfg.max_regen_batches = 10;
  cfg.max_resp_len = 1;  // one digit, compared whole
  auto state = init_trainer(cfg);
  ParamVector digits(state.params.layout_ptr());
  auto bias = digits.segment(segment_names::output_bias);
  for (std::size_t t = 10; t < bias.size(); ++t) bias[t] = -100.0;
  state.cycle.behavior_params = digits;
  const Rng step_rng = Rng(1).derive("step", 0);
  std::size_t rounds = 0;
  const auto groups = collect_groups(cfg, state.cycle, digits, RolloutMode::on_policy, 4,
                                     step_rng, &rounds);
  CHECK(rounds >= 2);
  CHECK(groups.size() == 4);
  for (const auto& g : groups) CHECK(group_filter(g.rewards, cfg.group_size));

  // a policy that always stops at once is always wrong
  ParamVector stopper(state.params.layout_ptr());
  stopper.segment(segment_names::output_bias)[12] = 100.0;
  state.cycle.behavior_params = stopper;
  cfg.max_regen_batches = 3;
  std::size_t used = 0;
  CHECK_THROWS_AS(collect_groups(cfg, state.cycle, stopper, RolloutMode::on_policy, 4, step_rng,
                                 &used),
                  EmptyBatchError);
  CHECK(used == 3);
}

TEST_CASE("metrics records round-trip through JSON, NaN deciles as null") {
  MetricsRecord r;
  r.step = 3;
  r.mode = "soup";
  r.mean_reward = 0.25;
  r.loss = -0.125;
  r.clip_frac_prefix = 0.5;
  for (std::size_t b = 0; b < 10; ++b) {
    r.entropy_decile[b] = 0.1 * static_cast<double>(b);
    r.clip_decile[b] = 0.0;
  }
  r.entropy_decile[9] = std::nan("");
  r.clip_decile[9] = std::nan("");
  r.tokens = 100;
  r.clipped_tokens = 7;
  const auto line = r.to_json_line();
  const auto j = nlohmann::json::parse(line);
  for (const char* key : {"step", "mode", "mean_reward", "loss", "clip_frac_prefix",
                          "clip_frac_suffix", "entropy_decile_0", "entropy_decile_9",
                          "clip_decile_0", "clip_decile_9", "lr", "grad_norm"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["entropy_decile_9"].is_null());
  const auto back = MetricsRecord::from_json_line(line);
  CHECK(back.to_json_line() == line);
  CHECK(std::isnan(back.entropy_decile[9]));
  CHECK(back.entropy_decile[3] == r.entropy_decile[3]);
  CHECK(back.clipped_tokens == 7);
}

TEST_CASE("run_training writes every artifact and is reproducible from effective.cfg") {
  auto cfg = tiny_config();
  cfg.dump_trajectories = true;
  const auto dir = fresh_dir("soup_test_run");
  const auto result = run_training(cfg, dir);

  for (const char* f : {"effective.cfg", "eval_set.txt", "metrics.log", "trajectories.jsonl",
                        "checkpoints/index.jsonl", "checkpoints/best.ckpt",
                        "checkpoints/step_000002.ckpt", "checkpoints/step_000004.ckpt",
                        "checkpoints/step_000006.ckpt"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
  CHECK(result.final_checkpoint == dir / "checkpoints/step_000006.ckpt");
  CHECK(result.scores.size() == 3);
  const auto metrics = read_metrics_log(result.metrics_log);
  REQUIRE(metrics.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(metrics[i].to_json_line() == result.metrics[i].to_json_line());

  const auto final_ckpt = load_checkpoint(result.final_checkpoint);
  CHECK(final_ckpt.global_step == 6);
  CHECK(final_ckpt.params == result.final_state.params);

  std::ifstream idx(dir / "checkpoints/index.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(idx, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("avg_at_k").get<double>() == result.scores[lines].score);
    ++lines;
  }
  CHECK(lines == 3);

  const auto dump = read_trajectory_dump(dir / "trajectories.jsonl");
  CHECK(dump.size() == 6 * 4 * 4);
  for (const auto& rec : dump) CHECK(rec.clipped.size() == rec.trajectory.size());

  const auto again_dir = fresh_dir("soup_test_run_again");
  const auto again = run_training(load_config(dir / "effective.cfg"), again_dir);
  CHECK(again.final_state.params == result.final_state.params);
  for (std::size_t i = 0; i < 6; ++i) CHECK(again.metrics[i].to_json_line() == result.metrics[i].to_json_line());
  fs::remove_all(dir);
  fs::remove_all(again_dir);
}
