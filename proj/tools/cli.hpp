#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aeon::cli {

// Exit codes beyond the per-command verdicts.
inline constexpr int kExitDivergence = 1;
inline constexpr int kExitSchemaMismatch = 4;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitInput = 66;

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace aeon::cli
