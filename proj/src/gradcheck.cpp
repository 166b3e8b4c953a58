#include "soup/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "soup/rollout.hpp"
#include "soup/tasks.hpp"

namespace soup {

namespace {

ParamVector jitter(const ParamVector& base, double scale, Rng& rng) {
  ParamVector out = base;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * (2.0 * rng.uniform() - 1.0);
  return out;
}

bool near_clip_bound(const BatchObjective& obj, const ClipConfig& clip, double margin) {
  const double lo = 1.0 - clip.eps_low;
  const double hi = 1.0 + clip.eps_high;
  for (const auto& group : obj.terms) {
    for (const auto& traj : group) {
      for (const auto& tok : traj.tokens) {
        if (std::abs(tok.ratio - lo) < margin || std::abs(tok.ratio - hi) < margin) return true;
      }
    }
  }
  return false;
}

struct Batch {
  PolicyArchitecture arch;
  ParamVector current;
  std::vector<GroupRollout> groups;
};

Batch make_batch(const GradCheckOptions& opt, Rng& rng) {
  Batch b;
  b.arch = PolicyArchitecture::for_vocabulary(Vocabulary::digits(), 8,
                                              4 + static_cast<int>(rng.below(5)),
                                              8 + static_cast<int>(rng.below(25)));
  const TokenId eos = Vocabulary::digits().eos;
  Rng init_rng = rng.derive("init");
  const ParamVector reference = init_params(b.arch, init_rng, 0.5);
  Rng noise_rng = rng.derive("noise");
  const ParamVector behavior = jitter(reference, 0.1, noise_rng);
  b.current = jitter(reference, 0.03, noise_rng);

  const TaskSpec spec{TaskKind::mod_sum, 3};
  for (std::size_t g = 0; g < opt.groups; ++g) {
    Rng group_rng = rng.derive("group", g);
    GroupRollout group;
    group.instance = generate_instance(spec, group_rng);
    for (std::size_t i = 0; i < opt.group_size; ++i) {
      Rng traj_rng = group_rng.derive("trajectory", i);
      Trajectory traj;
      if (i % 2 == 0) {
        TruncationStrategy strategy;
        strategy.ratio = 0.2 + 0.6 * group_rng.uniform();
        traj = build_soup_trajectory(behavior, reference, b.arch, group.instance, strategy,
                                     opt.max_len, 1.0, eos, traj_rng);
      } else {
        traj = build_onpolicy_trajectory(reference, b.arch, group.instance, opt.max_len, 1.0,
                                         eos, traj_rng);
      }
      group.trajectories.push_back(std::move(traj));
      // Mixed outcomes so every group carries a nonzero advantage.
      group.rewards.push_back(i == 0 ? 1.0 : i == 1 ? 0.0 : static_cast<double>(group_rng.below(2)));
    }
    b.groups.push_back(std::move(group));
  }
  return b;
}

}  // namespace

GradCheckReport run_grad_check(const GradCheckOptions& opt) {
  if (opt.cases < 1 || opt.groups < 1 || opt.group_size < 2) {
    throw std::invalid_argument("grad check needs at least one case, group and two samples");
  }
  ObjectiveSettings settings;
  GradCheckReport report;
  const Rng root(opt.seed);
  for (std::size_t c = 0; c < opt.cases; ++c) {
    const auto t0 = std::chrono::steady_clock::now();
    const Rng case_rng = root.derive("case", c);
    Batch batch;
    BatchObjective obj;
    std::uint64_t attempt = 0;
    for (;; ++attempt) {
      Rng attempt_rng = case_rng.derive("attempt", attempt);
      batch = make_batch(opt, attempt_rng);
      obj = batch_objective(batch.groups, batch.current, batch.arch, settings);
      if (!near_clip_bound(obj, settings.clip, opt.kink_margin)) break;
      if (attempt >= 1000) throw std::runtime_error("no kink-free batch found");
    }

    const ParamVector analytic =
        assemble_gradient(batch.groups, batch.current, batch.arch, obj, settings.temperature);
    const LossFn loss = [&](const ParamVector& p) {
      return batch_objective(batch.groups, p, batch.arch, settings).loss;
    };
    const ParamVector coarse = finite_diff_grad(loss, batch.current, opt.step);
    const ParamVector fine = finite_diff_grad(loss, batch.current, opt.step / 2.0);

    GradCheckCase rec;
    rec.seed = case_rng.derive("attempt", attempt).seed();
    rec.embed_dim = batch.arch.embed_dim;
    rec.hidden_dim = batch.arch.hidden_dim;
    rec.param_count = batch.current.size();
    rec.tokens = obj.stats.total_tokens();
    rec.prefix_tokens = obj.stats.prefix_tokens;
    rec.clipped_tokens = obj.stats.clipped_tokens();
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double numeric = (4.0 * fine[i] - coarse[i]) / 3.0;
      if (std::abs(analytic[i]) <= opt.grad_floor) continue;
      ++rec.checked;
      rec.max_rel_error = std::max(rec.max_rel_error, relative_error(analytic[i], numeric));
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.max_rel_error = std::max(report.max_rel_error, rec.max_rel_error);
    report.cases.push_back(rec);
  }
  return report;
}

}  // namespace soup
