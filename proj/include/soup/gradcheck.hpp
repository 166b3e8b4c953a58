#pragma once

// Finite-difference check of the surrogate gradient on small random
// configurations with mixed-provenance trajectories.

#include <cstdint>
#include <vector>

#include "soup/objective.hpp"
#include "soup/policy.hpp"

namespace soup {

struct GradCheckCase {
  std::uint64_t seed = 0;
  int embed_dim = 0;
  int hidden_dim = 0;
  std::size_t param_count = 0;
  std::size_t checked = 0;  // coordinates with |grad| above the floor
  std::size_t tokens = 0;
  std::size_t prefix_tokens = 0;
  std::size_t clipped_tokens = 0;
  double max_rel_error = 0.0;
  double seconds = 0.0;
};

struct GradCheckOptions {
  std::size_t cases = 5;
  std::uint64_t seed = 7;
  std::size_t groups = 2;
  std::size_t group_size = 4;
  std::size_t max_len = 10;
  double step = 1e-3;          // Richardson base step
  double grad_floor = 1e-8;    // smaller coordinates are not compared
  double kink_margin = 2e-2;   // minimum distance of any ratio from a clip bound
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double max_rel_error = 0.0;
};

/// Builds a random batch around a perturbed policy and compares the
/// analytic gradient of the batch loss with Richardson-extrapolated central
/// differences.
GradCheckReport run_grad_check(const GradCheckOptions& options = {});

}  // namespace soup
