// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "soup/config.hpp"
#include "soup/eval.hpp"
#include "soup/gradcheck.hpp"
#include "soup/objective.hpp"
#include "soup/rollout.hpp"
#include "soup/trainer.hpp"

using namespace soup;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "soup_acceptance" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ParamVector jitter(const ParamVector& p, Rng& rng, double amount) {
  ParamVector q = p;
  for (auto& v : q.values()) v += amount * (2.0 * rng.uniform() - 1.0);
  return q;
}

/// Random batch of `groups` groups around `reference`, half the
/// trajectories mixed with a prefix from `behavior`.
std::vector<GroupRollout> random_batch(const ParamVector& behavior, const ParamVector& reference,
                                       const PolicyArchitecture& arch, Rng& rng,
                                       std::size_t groups, std::size_t g_size,
                                       bool force_mixed_rewards) {
  const TokenId eos = Vocabulary::digits().eos;
  TruncationStrategy strategy;
  strategy.ratio = 0.2 + 0.6 * rng.uniform();
  std::vector<GroupRollout> out;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const auto inst = generate_instance({TaskKind::mod_sum, 3}, rng);
    GroupRollout g;
    g.instance = inst;
    for (std::size_t i = 0; i < g_size; ++i) {
      g.trajectories.push_back(
          i % 2 == 0
              ? build_soup_trajectory(behavior, reference, arch, inst, strategy, 10, 1.0, eos, rng)
              : build_onpolicy_trajectory(reference, arch, inst, 10, 1.0, eos, rng));
      double r = static_cast<double>(rng.below(2));
      if (force_mixed_rewards && i < 2) r = i == 0 ? 1.0 : 0.0;
      g.rewards.push_back(r);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------

Verdict criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckOptions opt;
  opt.cases = 5;
  opt.seed = 2024;
  const auto rep = run_grad_check(opt);
  const double secs = seconds_since(t0);
  bool shape_ok = rep.cases.size() >= 5;
  std::size_t prefix = 0;
  for (const auto& c : rep.cases) {
    shape_ok = shape_ok && c.hidden_dim <= 32 && c.checked > 0;
    prefix += c.prefix_tokens;
  }
  shape_ok = shape_ok && prefix > 0;
  return {shape_ok && rep.max_rel_error < 1e-4 && secs < 60.0,
          std::to_string(rep.cases.size()) + " cases, max rel err " +
              fmt("%.3g", rep.max_rel_error) + ", " + fmt("%.1f", secs) + " s"};
}

TrainConfig desk_config(std::uint64_t seed, Algorithm algorithm, std::size_t steps) {
  TrainConfig c;
  c.task.spec = {TaskKind::mod_sum, 4};
  c.batch_size = 32;
  c.group_size = 8;
  c.total_steps = steps;
  c.seed = seed;
  c.algorithm = algorithm;
  c.strategy.kind = TruncationKind::length_ratio;
  c.strategy.ratio = 0.5;
  c.refresh_interval = 4;
  c.checkpoint_every = 0;
  return c;
}

double max_param_diff(const ParamVector& a, const ParamVector& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

Verdict criterion_2() {
  const std::size_t steps = 200;
  auto on_cfg = desk_config(11, Algorithm::on_policy, steps);
  auto t1_cfg = desk_config(11, Algorithm::soup, steps);
  t1_cfg.refresh_interval = 1;
  auto r0_cfg = desk_config(11, Algorithm::soup, steps);
  r0_cfg.strategy.ratio = 0.0;

  const auto on = run_training(on_cfg, work_dir("c2_on"));
  const auto t1 = run_training(t1_cfg, work_dir("c2_t1"));
  const auto r0 = run_training(r0_cfg, work_dir("c2_r0"));

  bool logs_equal = on.metrics.size() == steps && t1.metrics.size() == steps;
  for (std::size_t i = 0; logs_equal && i < steps; ++i) {
    logs_equal = on.metrics[i].to_json_line() == t1.metrics[i].to_json_line();
  }
  // ratio 0 labels its later batches "soup"; every number must still agree
  bool r0_equal = r0.metrics.size() == steps;
  for (std::size_t i = 0; r0_equal && i < steps; ++i) {
    auto m = r0.metrics[i];
    m.mode = on.metrics[i].mode;
    r0_equal = m.to_json_line() == on.metrics[i].to_json_line();
  }
  const double d_t1 = max_param_diff(on.final_state.params, t1.final_state.params);
  const double d_r0 = max_param_diff(on.final_state.params, r0.final_state.params);
  return {logs_equal && r0_equal && d_t1 <= 1e-12 && d_r0 <= 1e-12,
          std::to_string(steps) + " steps; T=1 logs " + (logs_equal ? "identical" : "differ") +
              ", max param diff " + fmt("%.3g", d_t1) + "; ratio=0 logs " +
              (r0_equal ? "identical" : "differ") + ", max param diff " + fmt("%.3g", d_r0)};
}

Verdict criterion_3() {
  auto cfg = desk_config(12, Algorithm::soup, 200);
  std::size_t updates = 0, suffix_tokens = 0, prefix_tokens = 0, bad_steps = 0;
  double worst = 0.0;
  const UpdateObserver obs = [&](const UpdateView& v) {
    ++updates;
    double step_worst = 0.0;
    for (std::size_t g = 0; g < v.groups.size(); ++g) {
      const auto& trajs = v.groups[g].trajectories;
      for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto& terms = v.objective.terms[g][i];
        for (std::size_t t = 0; t < trajs[i].size(); ++t) {
          if (trajs[i].provenance[t] == Provenance::offpolicy_prefix) {
            ++prefix_tokens;
            continue;
          }
          ++suffix_tokens;
          step_worst = std::max(step_worst, std::abs(terms.tokens[t].ratio - 1.0));
        }
      }
    }
    if (step_worst > 1e-9) ++bad_steps;
    worst = std::max(worst, step_worst);
  };
  run_training(cfg, work_dir("c3"), obs);
  return {bad_steps == 0 && updates == cfg.total_steps && prefix_tokens > 0,
          std::to_string(updates) + " updates, " + std::to_string(suffix_tokens) +
              " suffix tokens, max |r-1| " + fmt("%.3g", worst) + ", " +
              std::to_string(bad_steps) + " failing steps"};
}

Verdict criterion_4() {
  // contract on every group seen during a real run
  auto cfg = desk_config(13, Algorithm::soup, 100);
  std::size_t groups = 0, degenerate = 0, violations = 0;
  const UpdateObserver obs = [&](const UpdateView& v) {
    for (std::size_t g = 0; g < v.groups.size(); ++g) {
      const auto& a = v.objective.advantages[g];
      ++groups;
      if (a.degenerate) {
        ++degenerate;
        for (double x : a.advantages) violations += x != 0.0;
        for (const auto& terms : v.objective.terms[g]) {
          for (double w : terms.weights) violations += w != 0.0;
        }
        continue;
      }
      const double n = static_cast<double>(a.advantages.size());
      double mean = 0.0, var = 0.0;
      for (double x : a.advantages) mean += x;
      mean /= n;
      for (double x : a.advantages) var += (x - mean) * (x - mean);
      const double sd = std::sqrt(var / n);
      if (std::abs(mean) > 1e-9 || std::abs(sd - 1.0) > 1e-9) ++violations;
    }
  };
  run_training(cfg, work_dir("c4"), obs);

  // perturbation: rewriting a degenerate group's responses and its constant
  // reward must leave the batch gradient bit-for-bit unchanged
  const auto arch = PolicyArchitecture::for_vocabulary(Vocabulary::digits(), 8, 6, 16);
  const TokenId eos = Vocabulary::digits().eos;
  Rng rng(404);
  std::size_t perturb_failures = 0;
  const std::size_t trials = 20;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng init = rng.derive("init", trial);
    const auto reference = init_params(arch, init, 0.5);
    const auto behavior = jitter(reference, init, 0.2);
    const auto current = jitter(reference, init, 0.05);
    auto batch = random_batch(behavior, reference, arch, init, 3, 4, true);
    auto& dead = batch[1];
    std::fill(dead.rewards.begin(), dead.rewards.end(), 1.0);
    const auto before = surrogate_gradient(batch, current, arch, {});
    const auto inst = dead.instance;
    for (auto& traj : dead.trajectories) {
      // same length keeps the token-mean normaliser fixed
      for (auto& tok : traj.tokens) {
        if (tok != eos) tok = static_cast<TokenId>(init.below(10));
      }
      const auto lp = sequence_logprobs(reference, arch, inst.prompt, traj.tokens, 1.0);
      traj.gen_logprob = lp;
      traj.provenance.assign(traj.tokens.size(), Provenance::onpolicy_suffix);
      traj.truncation_index = 0;
    }
    std::fill(dead.rewards.begin(), dead.rewards.end(), 0.0);
    const auto after = surrogate_gradient(batch, current, arch, {});
    for (std::size_t i = 0; i < before.size(); ++i) {
      if (before[i] != after[i]) {
        ++perturb_failures;
        break;
      }
    }
  }
  return {violations == 0 && perturb_failures == 0 && degenerate > 0,
          std::to_string(groups) + " groups (" + std::to_string(degenerate) +
              " degenerate), " + std::to_string(violations) + " violations; " +
              std::to_string(trials) + " perturbation trials, " +
              std::to_string(perturb_failures) + " changed the gradient"};
}

Verdict criterion_5() {
  const auto arch = PolicyArchitecture::for_vocabulary(Vocabulary::digits(), 8, 6, 16);
  Rng rng(505);
  std::size_t batches_with_clips = 0, clipped = 0, mismatches = 0, nonzero_clipped = 0;
  const std::size_t batches = 100;
  for (std::size_t b = 0; b < batches; ++b) {
    Rng r = rng.derive("batch", b);
    const auto reference = init_params(arch, r, 0.6);
    const auto behavior = jitter(reference, r, 0.5);
    const auto current = jitter(reference, r, 0.3);
    const auto batch = random_batch(behavior, reference, arch, r, 2, 4, true);
    const auto obj = batch_objective(batch, current, arch, {});
    const std::size_t n = obj.stats.clipped_tokens();
    clipped += n;
    batches_with_clips += n > 0;

    // keep: the weights as produced; zero: clipped weights forced to 0
    auto zeroed = obj;
    for (auto& g : zeroed.terms) {
      for (auto& t : g) {
        for (std::size_t k = 0; k < t.tokens.size(); ++k) {
          if (!t.tokens[k].clipped_active) continue;
          nonzero_clipped += t.weights[k] != 0.0 || t.tokens[k].grad_weight != 0.0;
          t.weights[k] = 0.0;
        }
      }
    }
    const auto keep = assemble_gradient(batch, current, arch, obj, 1.0);
    const auto zero = assemble_gradient(batch, current, arch, zeroed, 1.0);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const double a = keep[i], b = zero[i];
      if (std::memcmp(&a, &b, sizeof(double)) != 0) {
        ++mismatches;
        break;
      }
    }
  }
  return {mismatches == 0 && nonzero_clipped == 0 && batches_with_clips > 0,
          std::to_string(batches) + " batches (" + std::to_string(batches_with_clips) +
              " with clipping, " + std::to_string(clipped) + " clipped tokens), " +
              std::to_string(mismatches) + " bitwise mismatches"};
}

Verdict criterion_6() {
  const auto arch = PolicyArchitecture::for_vocabulary(Vocabulary::digits());
  Rng init(606);
  const auto params = init_params(arch, init, 0.5);
  const auto inst = make_instance({TaskKind::mod_sum, 2}, {3, 4});
  const TokenId eos = Vocabulary::digits().eos;
  GroupRollout g;
  g.instance = inst;
  for (const std::vector<TokenId>& resp : {std::vector<TokenId>{7, eos, 1},
                                           std::vector<TokenId>{2, 5, eos}}) {
    Trajectory t;
    t.prompt = inst.prompt;
    t.tokens = resp;
    t.gen_logprob = sequence_logprobs(params, arch, t.prompt, t.tokens, 1.0);
    t.gen_entropy.assign(3, 0.0);
    t.provenance.assign(3, Provenance::onpolicy_suffix);
    g.trajectories.push_back(t);
  }
  g.rewards = {1.0, 0.0};
  const std::vector<GroupRollout> batch = {g};
  const auto obj = batch_objective(batch, params, arch, {});
  bool ratios_one = true;
  for (const auto& terms : obj.terms[0]) {
    for (const auto& c : terms.tokens) ratios_one = ratios_one && c.ratio == 1.0;
  }
  return {obj.loss == 0.0 && ratios_one && obj.token_count == 6,
          "loss " + fmt("%.17g", obj.loss) + " over " + std::to_string(obj.token_count) +
              " tokens"};
}

double enumerated_pass(int n, int c, int k) {
  std::uint64_t hit = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    ++total;
    hit += (mask & ((1u << c) - 1u)) != 0;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

Verdict criterion_7() {
  std::size_t checked = 0, wrong = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        ++checked;
        wrong += pass_at_k(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(c),
                           static_cast<std::uint64_t>(k)) != enumerated_pass(n, c, k);
      }
    }
  }
  return {wrong == 0, std::to_string(checked) + " (n, c, k) triples, " +
                          std::to_string(wrong) + " inexact"};
}

// ---------------------------------------------------------------------------
// Directional experiments share their runs.

struct DeskRun {
  std::vector<MetricsRecord> metrics;
  double final_avg = 0.0;
};

const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

struct DeskRuns {
  std::vector<DeskRun> on, soup, minibatch;
  double seconds = 0.0;
  double minibatch_seconds = 0.0;
};

DeskRun desk_run(const TrainConfig& cfg, const std::string& name) {
  const auto r = run_training(cfg, work_dir(name));
  return {r.metrics, r.scores.back().score};
}

const DeskRuns& desk_runs() {
  static const DeskRuns runs = [] {
    DeskRuns out;
    auto t0 = std::chrono::steady_clock::now();
    for (auto seed : kSeeds) {
      out.on.push_back(desk_run(desk_config(seed, Algorithm::on_policy, 400),
                                "desk_on_" + std::to_string(seed)));
      out.soup.push_back(desk_run(desk_config(seed, Algorithm::soup, 400),
                                  "desk_soup_" + std::to_string(seed)));
    }
    out.seconds = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    for (auto seed : kSeeds) {
      TrainConfig c = preset("desk_minibatch");
      const TrainConfig base = desk_config(seed, Algorithm::on_policy, 400);
      c.task = base.task;
      c.total_steps = base.total_steps;
      c.seed = seed;
      c.checkpoint_every = 0;
      out.minibatch.push_back(desk_run(c, "desk_minibatch_" + std::to_string(seed)));
    }
    out.minibatch_seconds = seconds_since(t0);
    return out;
  }();
  return runs;
}

double tail_mean_reward(const DeskRun& r, std::size_t last) {
  double s = 0.0;
  const std::size_t n = std::min(last, r.metrics.size());
  for (std::size_t i = r.metrics.size() - n; i < r.metrics.size(); ++i) s += r.metrics[i].mean_reward;
  return s / static_cast<double>(n);
}

Verdict criterion_8() {
  const auto& runs = desk_runs();
  double on_reward = 0.0, on_avg = 0.0, soup_avg = 0.0;
  int soup_at_least = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    on_reward += tail_mean_reward(runs.on[i], 20);
    on_avg += runs.on[i].final_avg;
    soup_avg += runs.soup[i].final_avg;
    soup_at_least += runs.soup[i].final_avg >= runs.on[i].final_avg;
    per_seed += (i ? ", " : " [") + fmt("%.3f", runs.on[i].final_avg) + "/" +
                fmt("%.3f", runs.soup[i].final_avg);
  }
  per_seed += "]";
  const double k = static_cast<double>(kSeeds.size());
  on_reward /= k;
  on_avg /= k;
  soup_avg /= k;
  const bool baseline_ok = on_reward >= 0.9;
  const bool soup_ok = soup_avg >= on_avg - 0.02 && soup_at_least >= 2;
  const bool time_ok = runs.seconds < 15 * 60;
  return {baseline_ok && soup_ok && time_ok,
          "baseline train reward (last 20 steps) " + fmt("%.3f", on_reward) +
              " (need >= 0.9); avg@32 on/soup " + fmt("%.3f", on_avg) + "/" +
              fmt("%.3f", soup_avg) + per_seed + ", soup >= baseline on " +
              std::to_string(soup_at_least) + "/3 seeds; " + fmt("%.0f", runs.seconds) + " s"};
}

double tail_entropy_slope(const DeskRun& r, std::size_t last) {
  std::array<double, 10> sum{};
  std::array<std::size_t, 10> cnt{};
  const std::size_t n = std::min(last, r.metrics.size());
  for (std::size_t i = r.metrics.size() - n; i < r.metrics.size(); ++i) {
    for (std::size_t b = 0; b < 10; ++b) {
      const double v = r.metrics[i].entropy_decile[b];
      if (std::isnan(v)) continue;
      sum[b] += v;
      ++cnt[b];
    }
  }
  std::array<double, 10> mean{};
  for (std::size_t b = 0; b < 10; ++b) {
    mean[b] = cnt[b] ? sum[b] / static_cast<double>(cnt[b]) : std::numeric_limits<double>::quiet_NaN();
  }
  return decile_slope(mean);
}

double tail_clip_fraction(const DeskRun& r, std::size_t last) {
  std::size_t tokens = 0, clipped = 0;
  const std::size_t n = std::min(last, r.metrics.size());
  for (std::size_t i = r.metrics.size() - n; i < r.metrics.size(); ++i) {
    tokens += r.metrics[i].tokens;
    clipped += r.metrics[i].clipped_tokens;
  }
  return tokens ? static_cast<double>(clipped) / static_cast<double>(tokens) : 0.0;
}

Verdict criterion_9() {
  const auto& runs = desk_runs();
  double diff_sum = 0.0, clip_on = 0.0, clip_mb = 0.0;
  std::string slopes;
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    const double s_on = tail_entropy_slope(runs.on[i], 50);
    const double s_soup = tail_entropy_slope(runs.soup[i], 50);
    diff_sum += s_soup - s_on;
    slopes += (i ? ", " : " [") + fmt("%.4f", s_on) + "/" + fmt("%.4f", s_soup);
    clip_on += tail_clip_fraction(runs.on[i], 50);
    clip_mb += tail_clip_fraction(runs.minibatch[i], 50);
  }
  slopes += "]";
  const double k = static_cast<double>(kSeeds.size());
  const double mean_diff = diff_sum / k;
  clip_on /= k;
  clip_mb /= k;
  return {mean_diff > 0.0 && clip_mb > clip_on,
          "entropy slope on/soup" + slopes + ", mean paired diff " + fmt("%.4f", mean_diff) +
              "; clip fraction no-minibatch " + fmt("%.4g", clip_on) + " vs minibatch " +
              fmt("%.4g", clip_mb) + " (" + fmt("%.0f", runs.minibatch_seconds) + " s)"};
}

Verdict criterion_10() {
  const TokenId eos = Vocabulary::digits().eos;
  Rng rng(1010);
  std::size_t mono_fail = 0, clamp_fail = 0;
  const std::size_t trials = 20000;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t len = rng.below(64);
    std::vector<TokenId> t(len);
    // EOS can only end a response
    for (auto& x : t) x = static_cast<TokenId>(rng.below(12));
    if (len > 0 && rng.below(2) == 0) t.back() = eos;
    double a = rng.uniform(), b = rng.uniform();
    if (trial % 10 == 0) a = 0.0;
    if (trial % 10 == 1) b = 1.0;
    if (a > b) std::swap(a, b);
    const auto na = truncate_length_ratio(t, a, eos);
    const auto nb = truncate_length_ratio(t, b, eos);
    mono_fail += na > nb;
    for (auto n : {na, nb}) {
      const bool in_range = len == 0 ? n == 0 : n <= len - 1;
      const bool no_eos_end = n == 0 || t[n - 1] != eos;
      clamp_fail += !(in_range && no_eos_end);
    }
    const double r = rng.uniform();
    const auto expect = static_cast<std::size_t>(std::floor(static_cast<double>(len) * r + 0.5));
    const auto got = truncate_length_ratio(t, r, eos);
    if (len > 0 && expect <= len - 1 && (expect == 0 || t[expect - 1] != eos)) {
      clamp_fail += got != expect;
    }
  }

  const std::size_t len = 10, draws = 10000;
  const std::vector<TokenId> toks(len, 5);
  std::vector<double> ent(len, 0.1);
  const std::vector<std::size_t> tied = {1, 3, 4, 8};
  for (auto p : tied) ent[p] = 2.0;
  std::map<std::size_t, std::size_t> counts;
  Rng draw_rng(77);
  for (std::size_t d = 0; d < draws; ++d) {
    ++counts[truncate_entropy_topk(toks, ent, static_cast<int>(tied.size()), eos, draw_rng)];
  }
  const double p = 1.0 / static_cast<double>(tied.size());
  const double sd = std::sqrt(static_cast<double>(draws) * p * (1.0 - p));
  double worst_sigma = 0.0;
  bool only_tied = true;
  for (const auto& [pos, n] : counts) {
    only_tied = only_tied && std::find(tied.begin(), tied.end(), pos) != tied.end();
  }
  for (auto pos : tied) {
    const double z = std::abs(static_cast<double>(counts[pos]) - draws * p) / sd;
    worst_sigma = std::max(worst_sigma, z);
  }
  return {mono_fail == 0 && clamp_fail == 0 && only_tied && worst_sigma <= 4.0,
          std::to_string(trials) + " random responses: " + std::to_string(mono_fail) +
              " monotonicity and " + std::to_string(clamp_fail) +
              " clamp failures; top-k over 4 tied positions, " + std::to_string(draws) +
              " draws, worst deviation " + fmt("%.2f", worst_sigma) + " sigma"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"gradient oracle", criterion_1},
      {"reduction equivalence", criterion_2},
      {"ratio-1 property", criterion_3},
      {"advantage contract", criterion_4},
      {"clip masking", criterion_5},
      {"objective hand-check", criterion_6},
      {"pass@k correctness", criterion_7},
      {"desk-scale directional result", criterion_8},
      {"entropy-profile analogue", criterion_9},
      {"truncation properties", criterion_10},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s %2zu %-32s %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first, v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
