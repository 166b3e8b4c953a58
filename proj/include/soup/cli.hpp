#pragma once

// Command-line front end: train, eval, relay, diag, grad-check.

#include <iosfwd>
#include <string>
#include <vector>

namespace soup::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitRuntime = 4;

/// Parses argv (program name first) and runs the chosen verb.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace soup::cli
