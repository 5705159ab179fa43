#pragma once

#include "aeon/ids.hpp"
#include "aeon/ownership_graph.hpp"
#include "aeon/value.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace aeon {

struct SourceLoc {
    int line = 0;
    int col = 0;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class BinOp { add, sub, mul, div, mod, eq, ne, lt, le, gt, ge, land, lor };
enum class UnOp { neg, lnot };

struct Expr {
    struct Literal {
        Value value;
    };
    struct Var {
        std::string name;
    };
    struct SelfRef {};
    struct ContextLit {
        ContextId id;
    };
    struct FieldRead {
        ExprPtr object;
        std::string field;
    };
    struct Unary {
        UnOp op;
        ExprPtr operand;
    };
    struct Binary {
        BinOp op;
        ExprPtr lhs;
        ExprPtr rhs;
    };
    struct RecordLit {
        std::vector<std::pair<std::string, ExprPtr>> fields;
    };
    struct ChildCount {
        std::string class_name;
    };

    std::variant<Literal, Var, SelfRef, ContextLit, FieldRead, Unary, Binary, RecordLit, ChildCount> node;
    SourceLoc loc;
};

struct Stmt;
using StmtPtr = std::shared_ptr<const Stmt>;
using Block = std::vector<StmtPtr>;

struct CallSpec {
    ExprPtr target;
    std::string method;
    std::vector<ExprPtr> args;
};

struct Stmt {
    struct Skip {};
    struct LocalAssign {
        std::string var;
        ExprPtr value;
    };
    // object is "self" for store writes, otherwise a local record variable
    struct FieldUpdate {
        std::string object;
        std::string field;
        ExprPtr value;
    };
    struct SyncCall {
        std::optional<std::string> result;
        CallSpec call;
    };
    struct AsyncCall {
        CallSpec call;
    };
    struct EventDispatch {
        CallSpec call;
    };
    struct Return {
        ExprPtr value; // null for bare return
    };
    struct If {
        ExprPtr cond;
        Block then_branch;
        Block else_branch;
    };
    struct Repeat {
        std::int64_t count;
        Block body;
    };
    struct ForChildren {
        std::string var;
        std::string class_name;
        Block body;
    };
    struct AddOwnership {
        ExprPtr parent;
        ExprPtr child;
    };
    struct RemoveOwnership {
        ExprPtr parent;
        ExprPtr child;
    };
    // runtime only
    struct Waiting {
        std::optional<std::string> result;
        ContextId callee;
    };
    struct Emit {};
    struct Snapshot {};

    std::variant<Skip, LocalAssign, FieldUpdate, SyncCall, AsyncCall, EventDispatch, Return, If, Repeat, ForChildren,
                 AddOwnership, RemoveOwnership, Waiting, Emit, Snapshot>
        node;
    SourceLoc loc;
    std::uint32_t id = 0; // nonzero for parsed statements
};

// Persistent statement list: the residual code of an activation.
struct CodeNode;
using Code = std::shared_ptr<const CodeNode>;
struct CodeNode {
    StmtPtr head;
    Code tail;
};

Code cons(StmtPtr head, Code tail);
Code prepend(const Block &block, Code tail);
std::size_t code_length(const Code &c);
std::string canonical(const Code &c);

struct Param {
    std::string name;
    SemType type;
};

struct MethodDef {
    std::string class_name;
    std::string name;
    std::vector<Param> params;
    AccessMode access_mode = AccessMode::ex;
    Block body;
    bool returns_value = false;
    SemType return_type;
    SourceLoc loc;
};

struct ClassInfo {
    std::vector<std::string> owns;
    std::map<std::string, Value> field_defaults;
    bool snapshot_skip = false;
    SourceLoc loc;
};

struct InstanceDecl {
    ContextId id;
    std::string class_name;
    std::map<std::string, Value> field_inits;
    SourceLoc loc;
};

struct ScriptEntry {
    enum Kind { event, snapshot };
    Kind kind = event;
    ContextId target;
    std::string method;
    std::vector<Value> args;
    std::int64_t at_tick = 0;
    SourceLoc loc;
};

struct Program {
    std::string source_name;
    std::vector<ContextClassDecl> class_decls;
    std::map<std::string, ClassInfo> class_info;
    std::map<std::pair<std::string, std::string>, MethodDef> method_table;
    std::vector<InstanceDecl> instances;
    std::vector<std::pair<ContextId, ContextId>> edges;
    std::vector<ScriptEntry> main_script;

    const ContextClassDecl *find_class(const std::string &name) const;
    const MethodDef *find_method(const std::string &cls, const std::string &method) const;
    // Runtime graph from the topology block, ref-field edges included.
    OwnershipGraph build_graph() const;
    // Initial store of an instance: class defaults overlaid with instance inits.
    Store initial_store(const InstanceDecl &inst) const;
};

} // namespace aeon
