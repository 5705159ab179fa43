#include "aeon/static_checks.hpp"
#include "aeon/error.hpp"

#include <functional>

namespace aeon {

std::string Diagnostic::str() const
{
    return file + ":" + std::to_string(loc.line) + ":" + std::to_string(loc.col) + ": " + message;
}

namespace {

using TypeEnv = std::map<std::string, SemType>;

struct MethodTyping {
    const Program &prog;
    const MethodDef &method;
    TypeEnv env;

    SemType field_type(const std::string &cls, const std::string &field) const
    {
        if (const auto *c = prog.find_class(cls))
            for (const auto &f : c->field_types)
                if (f.name == field)
                    return f.type;
        return {};
    }

    SemType type_of(const Expr &e) const
    {
        return std::visit(
            [&](const auto &n) -> SemType {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, Expr::Literal>) {
                    if (n.value.is_int())
                        return {SemType::Int, {}};
                    if (n.value.is_bool())
                        return {SemType::Bool, {}};
                    if (n.value.is_record())
                        return {SemType::Record, {}};
                    return {};
                } else if constexpr (std::is_same_v<T, Expr::Var>) {
                    auto it = env.find(n.name);
                    return it == env.end() ? SemType{} : it->second;
                } else if constexpr (std::is_same_v<T, Expr::SelfRef>) {
                    return SemType::context(method.class_name);
                } else if constexpr (std::is_same_v<T, Expr::ContextLit>) {
                    for (const auto &i : prog.instances)
                        if (i.id == n.id)
                            return SemType::context(i.class_name);
                    return SemType::context("");
                } else if constexpr (std::is_same_v<T, Expr::FieldRead>) {
                    if (std::holds_alternative<Expr::SelfRef>(n.object->node))
                        return field_type(method.class_name, n.field);
                    return {};
                } else if constexpr (std::is_same_v<T, Expr::Binary>) {
                    switch (n.op) {
                    case BinOp::add:
                    case BinOp::sub:
                    case BinOp::mul:
                    case BinOp::div:
                    case BinOp::mod: return {SemType::Int, {}};
                    default: return {SemType::Bool, {}};
                    }
                } else if constexpr (std::is_same_v<T, Expr::Unary>) {
                    return n.op == UnOp::neg ? SemType{SemType::Int, {}} : SemType{SemType::Bool, {}};
                } else if constexpr (std::is_same_v<T, Expr::RecordLit>) {
                    return {SemType::Record, {}};
                } else {
                    return {SemType::Int, {}};
                }
            },
            e.node);
    }

    // Classes a call may land on.
    std::vector<std::string> resolve(const CallSpec &c) const
    {
        SemType t = type_of(*c.target);
        if (t.kind == SemType::Context && !t.class_name.empty())
            return {t.class_name};
        std::vector<std::string> out;
        for (const auto &[key, m] : prog.method_table)
            if (key.second == c.method)
                out.push_back(key.first);
        return out;
    }
};

void walk(const Block &b, const std::function<void(const Stmt &)> &f)
{
    for (const auto &s : b) {
        f(*s);
        if (auto p = std::get_if<Stmt::If>(&s->node)) {
            walk(p->then_branch, f);
            walk(p->else_branch, f);
        } else if (auto p = std::get_if<Stmt::Repeat>(&s->node)) {
            walk(p->body, f);
        } else if (auto p = std::get_if<Stmt::ForChildren>(&s->node)) {
            walk(p->body, f);
        }
    }
}

void walk_exprs(const Expr &e, const std::function<void(const Expr &)> &f)
{
    f(e);
    std::visit(
        [&](const auto &n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Expr::FieldRead>)
                walk_exprs(*n.object, f);
            else if constexpr (std::is_same_v<T, Expr::Unary>)
                walk_exprs(*n.operand, f);
            else if constexpr (std::is_same_v<T, Expr::Binary>) {
                walk_exprs(*n.lhs, f);
                walk_exprs(*n.rhs, f);
            } else if constexpr (std::is_same_v<T, Expr::RecordLit>) {
                for (const auto &[_, x] : n.fields)
                    walk_exprs(*x, f);
            }
        },
        e.node);
}

const CallSpec *call_of(const Stmt &s)
{
    if (auto p = std::get_if<Stmt::SyncCall>(&s.node))
        return &p->call;
    if (auto p = std::get_if<Stmt::AsyncCall>(&s.node))
        return &p->call;
    return nullptr;
}

// Flow-insensitive local typing: iterate to a fixpoint over assignments.
MethodTyping type_method(const Program &prog, const MethodDef &m)
{
    MethodTyping t{prog, m, {}};
    for (const auto &p : m.params)
        t.env[p.name] = p.type;
    for (int round = 0; round < 4; ++round) {
        walk(m.body, [&](const Stmt &s) {
            if (auto p = std::get_if<Stmt::LocalAssign>(&s.node)) {
                SemType ty = t.type_of(*p->value);
                if (ty.kind != SemType::Any)
                    t.env[p->var] = ty;
            } else if (auto p = std::get_if<Stmt::ForChildren>(&s.node)) {
                t.env[p->var] = SemType::context(p->class_name);
            } else if (auto p = std::get_if<Stmt::SyncCall>(&s.node)) {
                if (!p->result)
                    return;
                auto targets = t.resolve(p->call);
                if (targets.size() == 1)
                    if (const auto *callee = prog.find_method(targets[0], p->call.method))
                        if (callee->return_type.kind != SemType::Any)
                            t.env[*p->result] = callee->return_type;
            }
        });
    }
    return t;
}

} // namespace

void collect_effects(Program &program)
{
    for (auto &cls : program.class_decls) {
        std::set<std::string> eff;
        for (const auto &f : cls.field_types)
            if (f.type.is_context() && !f.type.class_name.empty())
                eff.insert(f.type.class_name);
        if (auto it = program.class_info.find(cls.name); it != program.class_info.end())
            for (const auto &o : it->second.owns)
                eff.insert(o);
        for (const auto &mname : cls.methods) {
            const MethodDef *m = program.find_method(cls.name, mname);
            if (!m)
                continue;
            MethodTyping t = type_method(program, *m);
            for (const auto &p : m->params)
                if (p.type.is_context() && !p.type.class_name.empty())
                    eff.insert(p.type.class_name);
            walk(m->body, [&](const Stmt &s) {
                if (auto p = std::get_if<Stmt::ForChildren>(&s.node))
                    eff.insert(p->class_name);
                if (const CallSpec *c = call_of(s))
                    for (const auto &k : t.resolve(*c))
                        eff.insert(k);
                auto exprs = [&](const ExprPtr &e) {
                    if (!e)
                        return;
                    walk_exprs(*e, [&](const Expr &x) {
                        if (auto cc = std::get_if<Expr::ChildCount>(&x.node))
                            eff.insert(cc->class_name);
                    });
                };
                if (auto p = std::get_if<Stmt::LocalAssign>(&s.node))
                    exprs(p->value);
                else if (auto p = std::get_if<Stmt::FieldUpdate>(&s.node))
                    exprs(p->value);
                else if (auto p = std::get_if<Stmt::Return>(&s.node))
                    exprs(p->value);
                else if (auto p = std::get_if<Stmt::If>(&s.node))
                    exprs(p->cond);
            });
        }
        cls.effect_set = std::move(eff);
    }
}

ClassDagResult check_class_dag(const Program &program)
{
    return check_class_dag(std::span<const ContextClassDecl>(program.class_decls));
}

CheckResult check_readonly(const Program &program)
{
    CheckResult out;
    using Key = std::pair<std::string, std::string>;
    // tainted: method writes, or (transitively) calls something that writes
    std::map<Key, bool> tainted;
    std::map<Key, std::vector<std::pair<const Stmt *, std::vector<Key>>>> calls;
    std::map<Key, std::vector<std::pair<const Stmt *, std::string>>> direct;
    for (const auto &[key, m] : program.method_table) {
        MethodTyping t = type_method(program, m);
        walk(m.body, [&](const Stmt &s) {
            if (auto p = std::get_if<Stmt::FieldUpdate>(&s.node)) {
                if (p->object == "self")
                    direct[key].emplace_back(&s, "writes field '" + p->field + "'");
            } else if (std::holds_alternative<Stmt::AddOwnership>(s.node)) {
                direct[key].emplace_back(&s, "modifies ownership (add_ownership)");
            } else if (std::holds_alternative<Stmt::RemoveOwnership>(s.node)) {
                direct[key].emplace_back(&s, "modifies ownership (remove_ownership)");
            } else if (const CallSpec *c = call_of(s)) {
                std::vector<Key> callees;
                for (const auto &cls : t.resolve(*c))
                    if (program.find_method(cls, c->method))
                        callees.emplace_back(cls, c->method);
                calls[key].emplace_back(&s, std::move(callees));
            }
        });
        tainted[key] = m.access_mode == AccessMode::ex || !direct[key].empty();
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto &[key, t] : tainted) {
            if (t)
                continue;
            for (const auto &[s, callees] : calls[key])
                for (const auto &c : callees)
                    if (tainted[c]) {
                        t = true;
                        changed = true;
                    }
        }
    }
    for (const auto &[key, m] : program.method_table) {
        if (m.access_mode != AccessMode::ro)
            continue;
        std::string who = "ro method " + key.first + "." + key.second + " ";
        for (const auto &[s, why] : direct[key])
            out.diagnostics.push_back({program.source_name, s->loc, who + why});
        for (const auto &[s, callees] : calls[key]) {
            for (const auto &c : callees) {
                if (!tainted[c])
                    continue;
                const MethodDef *callee = program.find_method(c.first, c.second);
                std::string what = callee->access_mode == AccessMode::ex ? "calls ex method "
                                                                          : "calls ro method that writes: ";
                out.diagnostics.push_back({program.source_name, s->loc, who + what + c.first + "." + c.second});
                break;
            }
        }
    }
    out.accepted = out.diagnostics.empty();
    return out;
}

CheckResult check_wellformed(const Program &program)
{
    CheckResult out;
    auto diag = [&](SourceLoc at, std::string msg) {
        out.diagnostics.push_back({program.source_name, at, std::move(msg)});
    };
    auto known_class = [&](const std::string &c) { return program.find_class(c) != nullptr; };

    for (const auto &cls : program.class_decls) {
        const ClassInfo &info = program.class_info.at(cls.name);
        for (const auto &o : info.owns)
            if (!known_class(o))
                diag(info.loc, "class " + cls.name + " owns unknown class " + o);
        for (const auto &f : cls.field_types)
            if (f.type.is_context() && !known_class(f.type.class_name))
                diag(info.loc, "field " + cls.name + "." + f.name + " has unknown class " + f.type.class_name);
    }
    for (const auto &[key, m] : program.method_table) {
        MethodTyping t = type_method(program, m);
        std::set<std::string> params;
        for (const auto &p : m.params)
            if (!params.insert(p.name).second)
                diag(m.loc, "duplicate parameter " + p.name);
        walk(m.body, [&](const Stmt &s) {
            if (auto p = std::get_if<Stmt::ForChildren>(&s.node)) {
                if (!known_class(p->class_name))
                    diag(s.loc, "unknown class " + p->class_name);
            }
            const CallSpec *c = call_of(s);
            if (!c) {
                if (auto e = std::get_if<Stmt::EventDispatch>(&s.node))
                    c = &e->call;
                else
                    return;
            }
            auto targets = t.resolve(*c);
            if (targets.empty()) {
                diag(s.loc, "no class declares method " + c->method);
                return;
            }
            for (const auto &cls : targets) {
                const MethodDef *callee = program.find_method(cls, c->method);
                if (!callee) {
                    diag(s.loc, "class " + cls + " has no method " + c->method);
                    continue;
                }
                if (callee->params.size() != c->args.size())
                    diag(s.loc, "call to " + cls + "." + c->method + " expects " +
                                    std::to_string(callee->params.size()) + " arguments");
                if (std::holds_alternative<Stmt::AsyncCall>(s.node) && callee->returns_value)
                    diag(s.loc, "async call to value-returning method " + cls + "." + c->method);
            }
        });
    }

    std::map<ContextId, std::string> cls_of;
    for (const auto &i : program.instances) {
        if (!known_class(i.class_name))
            diag(i.loc, "context " + i.id.value + " has unknown class " + i.class_name);
        if (!cls_of.emplace(i.id, i.class_name).second)
            diag(i.loc, "duplicate context " + i.id.value);
    }
    auto check_edge = [&](const ContextId &p, const ContextId &c, SourceLoc at) {
        if (!cls_of.count(p) || !cls_of.count(c)) {
            diag(at, "edge " + p.value + " -> " + c.value + " names an unknown context");
            return;
        }
        const std::string &pc = cls_of[p];
        const std::string &cc = cls_of[c];
        const ContextClassDecl *decl = program.find_class(pc);
        if (decl && pc != cc && !decl->effect_set.count(cc))
            diag(at, "edge " + p.value + " -> " + c.value + ": class " + pc + " may not own " + cc);
    };
    for (const auto &[p, c] : program.edges)
        check_edge(p, c, {});
    for (const auto &i : program.instances)
        for (const auto &[f, v] : i.field_inits)
            if (v.is_context())
                check_edge(i.id, v.as_context(), i.loc);
    if (out.diagnostics.empty()) {
        try {
            program.build_graph();
        } catch (const Error &e) {
            diag({}, std::string("topology: ") + e.what());
        }
    }
    for (const auto &e : program.main_script) {
        auto it = cls_of.find(e.target);
        if (it == cls_of.end()) {
            diag(e.loc, "unknown context " + e.target.value);
            continue;
        }
        if (e.kind != ScriptEntry::event)
            continue;
        const MethodDef *m = program.find_method(it->second, e.method);
        if (!m)
            diag(e.loc, "class " + it->second + " has no method " + e.method);
        else if (m->params.size() != e.args.size())
            diag(e.loc, "event " + e.target.value + "." + e.method + " expects " + std::to_string(m->params.size()) +
                            " arguments");
    }
    out.accepted = out.diagnostics.empty();
    return out;
}

CheckResult check_all(Program &program)
{
    collect_effects(program);
    CheckResult out;
    ClassDagResult dag = check_class_dag(program);
    if (!dag.accepted) {
        std::string cyc;
        for (const auto &c : dag.cycle)
            cyc += c + " -> ";
        cyc += dag.cycle.front();
        SourceLoc at = program.class_info.at(dag.cycle.front()).loc;
        out.diagnostics.push_back({program.source_name, at, "ownership cycle between classes: " + cyc});
    }
    CheckResult ro = check_readonly(program);
    out.diagnostics.insert(out.diagnostics.end(), ro.diagnostics.begin(), ro.diagnostics.end());
    if (dag.accepted) {
        CheckResult wf = check_wellformed(program);
        out.diagnostics.insert(out.diagnostics.end(), wf.diagnostics.begin(), wf.diagnostics.end());
    }
    out.accepted = out.diagnostics.empty();
    return out;
}

} // namespace aeon
