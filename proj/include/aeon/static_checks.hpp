#pragma once

#include "aeon/ast.hpp"
#include "aeon/ownership_graph.hpp"

#include <string>
#include <vector>

namespace aeon {

struct Diagnostic {
    std::string file;
    SourceLoc loc;
    std::string message;

    std::string str() const;
};

struct CheckResult {
    bool accepted = true;
    std::vector<Diagnostic> diagnostics;
};

// Fills effect_set of every class from fields, owns lists, children[...] uses and
// call targets.
void collect_effects(Program &program);

ClassDagResult check_class_dag(const Program &program);

CheckResult check_readonly(const Program &program);

// async on value-returning methods, unknown classes/methods, arity, topology
// consistency with class constraints.
CheckResult check_wellformed(const Program &program);

// Everything above; the cycle (if any) is reported as one diagnostic.
CheckResult check_all(Program &program);

} // namespace aeon
