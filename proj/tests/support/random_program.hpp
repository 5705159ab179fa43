#pragma once

#include "aeon/ast.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace aeon::testing {

// Small deterministic generator; the same seed gives the same sequence on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : s_(seed ^ 0x9e3779b97f4a7c15ULL) {}
    std::uint64_t next();
    // uniform in [0, n)
    std::uint64_t below(std::uint64_t n) { return next() % n; }
    bool chance(int percent) { return below(100) < static_cast<std::uint64_t>(percent); }

  private:
    std::uint64_t s_;
};

struct GenLimits {
    int max_contexts = 5;
    int max_events = 4;
    int max_stmts = 6;
};

struct GeneratedProgram {
    std::uint64_t seed = 0;
    std::string text;
    std::shared_ptr<const Program> program; // parsed and accepted by check_all
};

// Contexts C0..Cn-1 of classes K0..Kn-1 owned top-down by index; methods call only
// descendants; every statement list stays within the limits.
GeneratedProgram random_program(std::uint64_t seed, const GenLimits &limits = {});

struct IndependentPair {
    GeneratedProgram program;
    ScriptEntry e0, e1;
};

// Two single-rooted subtrees under a common untouched root, one event in each.
IndependentPair random_independent_pair(std::uint64_t seed);

// Parses and runs check_all; throws on rejection.
std::shared_ptr<const Program> accepted_program(const std::string &text, const std::string &name = "<test>");

} // namespace aeon::testing
