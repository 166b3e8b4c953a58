#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "soup/config.hpp"

using namespace soup;

TEST_CASE("defaults") {
  const TrainConfig c;
  CHECK(c.batch_size == 32);
  CHECK(c.group_size == 8);
  CHECK(c.clip.eps_low == 0.2);
  CHECK(c.clip.eps_high == 0.28);
  CHECK(c.eval_temperature == 0.6);
  CHECK(c.eval_k == 32);
  CHECK(c.strategy.ratio == 0.5);
  CHECK(c.checkpoint_every == 25);
  CHECK(c.max_regen_batches == 10);
  CHECK_FALSE(c.filter_groups);
  CHECK_FALSE(c.mini_batch.enabled);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("parse: comments, whitespace, dotted keys") {
  const auto c = parse_config(
      "# run\n"
      "algorithm = on_policy\n"
      "T=4   # cycle length\n"
      "\n"
      "strategy.kind=entropy_topk\n"
      "strategy.k = 5\n"
      "mini_batch.enabled=true\n"
      "mini_batch.minibatch_size=4\n"
      "mini_batch.gather_size=16\n"
      "task.kind=reverse\n"
      "task.difficulty=6\n"
      "optim.base_lr=1e-2\n");
  CHECK(c.algorithm == Algorithm::on_policy);
  CHECK(c.refresh_interval == 4);
  CHECK(c.strategy.kind == TruncationKind::entropy_topk);
  CHECK(c.strategy.k == 5);
  CHECK(c.mini_batch.enabled);
  CHECK(c.mini_batch.gather_size == 16);
  CHECK(c.task.spec.kind == TaskKind::reverse);
  CHECK(c.task.spec.difficulty == 6);
  CHECK(c.optim.base_lr == 1e-2);
}

TEST_CASE("unknown keys and bad values are config errors") {
  CHECK_THROWS_AS(parse_config("no_such_key=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("T=four\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("T=-1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mini_batch.enabled=maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("strategy.kind=middle\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just a line\n"), ConfigError);
  try {
    parse_config("T=1\nbogus=2\n");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("overrides apply after the file, last one wins") {
  TrainConfig c = parse_config("T=3\nstrategy.ratio=0.25\n");
  apply_override(c, "T=8");
  apply_override(c, "strategy.ratio=0.5");
  apply_override(c, "T=6");
  CHECK(c.refresh_interval == 6);
  CHECK(c.strategy.ratio == 0.5);
  CHECK_THROWS_AS(apply_override(c, "T"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "nope=3"), ConfigError);
}

TEST_CASE("to_text round-trips every key") {
  TrainConfig c;
  c.algorithm = Algorithm::on_policy;
  c.seed = 99;
  c.strategy.kind = TruncationKind::entropy_topk;
  c.strategy.ratio = 0.1 + 0.2;  // not exactly representable in short decimal
  c.optim.base_lr = 1.0 / 3.0;
  c.temperature = 0.7;
  c.task.spec = {TaskKind::sort, 7};
  c.mini_batch = {true, 8, 64};
  const auto text = to_text(c);
  const auto back = parse_config(text);
  CHECK(to_text(back) == text);
  CHECK(back.strategy.ratio == c.strategy.ratio);
  CHECK(back.optim.base_lr == c.optim.base_lr);
  for (const auto& key : config_keys()) {
    CHECK(get_config_value(back, key) == get_config_value(c, key));
    CHECK(text.find(key + "=") != std::string::npos);
  }
  const auto keys = config_keys();
  CHECK(std::set<std::string>(keys.begin(), keys.end()).size() == keys.size());
}

TEST_CASE("validation") {
  auto bad = [](const char* text) {
    const auto c = parse_config(text);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad("T=0\n");
  bad("G=1\n");
  bad("batch_size=0\n");
  bad("mini_batch.enabled=true\nmini_batch.minibatch_size=3\nmini_batch.gather_size=10\n");
  bad("strategy.ratio=1.5\n");
  bad("clip.eps_low=0\n");
  bad("temperature=0\n");
  bad("task.difficulty=1\n");
  bad("arch.hidden_dim=0\n");
  bad("kl.use_kl_loss=true\n");
  bad("kl.kl_coeff=0.1\n");
  bad("kl.use_kl_in_reward=true\n");
  CHECK_NOTHROW(parse_config("kl.use_kl_loss=false\nkl.kl_coeff=0\n").validate());
}

TEST_CASE("presets") {
  for (const auto& name : preset_names()) CHECK_NOTHROW(preset(name).validate());
  const auto desk = preset("desk_minibatch");
  CHECK(desk.algorithm == Algorithm::on_policy);
  CHECK(desk.mini_batch.enabled);
  CHECK(desk.mini_batch.gather_size == 8 * desk.mini_batch.minibatch_size);
  const auto paper = preset("paper_minibatch");
  CHECK(paper.mini_batch.minibatch_size == 32);
  CHECK(paper.mini_batch.gather_size == 512);
  CHECK_THROWS_AS(preset("huge"), ConfigError);
}

TEST_CASE("load_config reads a file over a base") {
  const auto path = std::filesystem::temp_directory_path() / "soup_test_config.cfg";
  {
    std::ofstream out(path);
    out << "T=2\nseed=17\n";
  }
  const auto c = load_config(path, preset("desk_minibatch"));
  CHECK(c.refresh_interval == 2);
  CHECK(c.seed == 17);
  CHECK(c.mini_batch.enabled);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), ConfigError);
}

TEST_CASE("derived settings") {
  TrainConfig c;
  c.group_size = 4;
  c.max_resp_len = 20;
  c.temperature = 0.9;
  c.filter_groups = true;
  const auto r = c.rollout_settings();
  CHECK(r.group_size == 4);
  CHECK(r.max_len == 20);
  CHECK(r.temperature == 0.9);
  const auto o = c.objective_settings();
  CHECK(o.filter_groups);
  CHECK(o.temperature == 0.9);
  CHECK(c.architecture().vocab_size == 14);
}
