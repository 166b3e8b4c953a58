#pragma once

// Versioned binary checkpoint:
//
//   "SOUPCKPT" | u32 format version | u64 payload bytes | payload | u64 FNV-1a(payload)
//
// The payload holds the global step, the policy architecture, the
// vocabulary, the parameter layout (segment names, offsets, shapes), the
// raw parameter values and the optimizer moments. Integers and doubles are
// stored little-endian. Writes go to a temporary file that is then renamed
// over the destination.

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "soup/numerics.hpp"
#include "soup/policy.hpp"

namespace soup {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, version, corruption };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Checkpoint {
  PolicyArchitecture arch;
  Vocabulary vocab;
  ParamVector params;
  OptimizerState optimizer;
  std::int64_t global_step = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace soup
