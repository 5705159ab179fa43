#pragma once

#include "aeon/ast.hpp"
#include "aeon/ownership_graph.hpp"
#include "aeon/value.hpp"

#include <string>
#include <vector>

namespace aeon {

struct IntraConfig {
    Store store;
    Env genv;
    std::vector<Env> lenv;
    Code code;
    AccessMode am = AccessMode::ex;
};

// What the executing context can see besides its own configuration.
struct IntraEnv {
    const Program *program = nullptr;
    const OwnershipGraph *graph = nullptr;
    ContextId self;
};

struct Label {
    enum Kind { silent, ret, synch, asynch, event, add_owner, remove_owner, snapshot };
    Kind kind = silent;
    ContextId target;
    std::string method;
    std::vector<Value> args;
    AccessMode am = AccessMode::ex;
    Value value;
    ContextId child; // ownership labels: target is the parent

    std::string str() const;
};

Value eval_expr(const IntraEnv &env, const IntraConfig &cfg, const Expr &e);

// Runs the silent prefix and stops at the first non-silent label.
std::pair<IntraConfig, Label> step_intra(const IntraEnv &env, IntraConfig cfg);

IntraConfig resume_with_return(IntraConfig cfg, const ContextId &callee, const Value &v);

// Fresh frame for a method activation; args are deep-copied.
IntraConfig enter_method(const MethodDef &m, const std::vector<Value> &args, Store store, Env genv, AccessMode am);

bool head_blocked(const Code &c);

} // namespace aeon
