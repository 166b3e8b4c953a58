#pragma once

// Line-delimited JSON dump of trajectories for offline diagnostics.
// One object per line:
//   {"step", "group", "index", "prompt", "answer", "tokens", "provenance",
//    "truncation_index", "reward", "gen_logprob", "gen_entropy", "clipped"}
// Token sequences are space-separated vocabulary symbols; provenance is a
// string of 'P' (off-policy prefix) and 'S' (on-policy suffix) characters.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "soup/rollout.hpp"

namespace soup {

struct TrajectoryRecord {
  std::int64_t step = 0;
  std::size_t group = 0;
  std::size_t index = 0;
  std::vector<TokenId> answer;
  Trajectory trajectory;
  double reward = 0.0;
  std::vector<bool> clipped;  // empty when not recorded
};

std::string to_json_line(const TrajectoryRecord& rec);
TrajectoryRecord parse_json_line(const std::string& line);

std::vector<TrajectoryRecord> read_trajectory_dump(const std::filesystem::path& path);

}  // namespace soup
