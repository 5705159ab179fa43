#include "aeon/interp.hpp"
#include "aeon/error.hpp"

namespace aeon {

namespace {

template <class T>
StmtPtr synth(T node)
{
    auto s = std::make_shared<Stmt>();
    s->node = std::move(node);
    return s;
}

ExprPtr literal(Value v)
{
    auto e = std::make_shared<Expr>();
    e->node = Expr::Literal{std::move(v)};
    return e;
}

std::int64_t arith(BinOp op, std::int64_t a, std::int64_t b)
{
    std::int64_t r = 0;
    switch (op) {
    case BinOp::add:
        if (__builtin_add_overflow(a, b, &r))
            throw Error(ErrorKind::overflow, std::to_string(a) + " + " + std::to_string(b));
        return r;
    case BinOp::sub:
        if (__builtin_sub_overflow(a, b, &r))
            throw Error(ErrorKind::overflow, std::to_string(a) + " - " + std::to_string(b));
        return r;
    case BinOp::mul:
        if (__builtin_mul_overflow(a, b, &r))
            throw Error(ErrorKind::overflow, std::to_string(a) + " * " + std::to_string(b));
        return r;
    case BinOp::div:
    case BinOp::mod:
        if (b == 0)
            throw Error(ErrorKind::div_by_zero, std::to_string(a));
        if (a == INT64_MIN && b == -1)
            throw Error(ErrorKind::overflow, "INT64_MIN / -1");
        return op == BinOp::div ? a / b : a % b;
    default: break;
    }
    throw Error(ErrorKind::type_mismatch, "not an arithmetic operator");
}

const Value &lookup_var(const IntraConfig &cfg, const std::string &name)
{
    if (!cfg.lenv.empty()) {
        auto it = cfg.lenv.back().find(name);
        if (it != cfg.lenv.back().end())
            return it->second;
    }
    auto it = cfg.genv.find(name);
    if (it != cfg.genv.end())
        return it->second;
    throw Error(ErrorKind::unbound_variable, name);
}

std::vector<Value> eval_args(const IntraEnv &env, const IntraConfig &cfg, const CallSpec &c)
{
    std::vector<Value> out;
    out.reserve(c.args.size());
    for (const auto &a : c.args)
        out.push_back(deep_copy(eval_expr(env, cfg, *a)));
    return out;
}

ContextId eval_target(const IntraEnv &env, const IntraConfig &cfg, const CallSpec &c)
{
    ContextId t = eval_expr(env, cfg, *c.target).as_context();
    if (!env.graph->contains(t))
        throw Error(ErrorKind::unknown_context, t.value);
    return t;
}

const MethodDef &callee_method(const IntraEnv &env, const ContextId &target, const std::string &method)
{
    const std::string &cls = env.graph->class_of(target);
    const MethodDef *m = env.program->find_method(cls, method);
    if (!m)
        throw Error(ErrorKind::unknown_method, cls + "." + method);
    return *m;
}

} // namespace

std::string Label::str() const
{
    auto args_str = [&] {
        std::string s = "(";
        for (std::size_t i = 0; i < args.size(); ++i)
            s += (i ? ", " : "") + to_string(args[i]);
        return s + ")";
    };
    switch (kind) {
    case silent: return "silent";
    case ret: return "ret(" + to_string(value) + ")";
    case synch: return std::string("synch ") + target.value + "." + method + args_str() + " " + to_string(am);
    case asynch: return std::string("asynch ") + target.value + "." + method + args_str() + " " + to_string(am);
    case event: return "event " + target.value + "." + method + args_str();
    case add_owner: return "add_ownership " + target.value + " -> " + child.value;
    case remove_owner: return "remove_ownership " + target.value + " -> " + child.value;
    case snapshot: return "snapshot";
    }
    return "?";
}

Value eval_expr(const IntraEnv &env, const IntraConfig &cfg, const Expr &e)
{
    return std::visit(
        [&](const auto &n) -> Value {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Expr::Literal>) {
                return n.value;
            } else if constexpr (std::is_same_v<T, Expr::Var>) {
                return lookup_var(cfg, n.name);
            } else if constexpr (std::is_same_v<T, Expr::SelfRef>) {
                return Value(env.self);
            } else if constexpr (std::is_same_v<T, Expr::ContextLit>) {
                return Value(n.id);
            } else if constexpr (std::is_same_v<T, Expr::FieldRead>) {
                Value obj = eval_expr(env, cfg, *n.object);
                if (obj.is_context()) {
                    if (obj.as_context() != env.self)
                        throw Error(ErrorKind::type_mismatch,
                                    "field " + n.field + " of another context (" + obj.as_context().value + ")");
                    auto it = cfg.store.find(n.field);
                    if (it == cfg.store.end())
                        throw Error(ErrorKind::unbound_variable, "self." + n.field);
                    return it->second;
                }
                const Record &r = obj.as_record();
                auto it = r.fields.find(n.field);
                if (it == r.fields.end())
                    throw Error(ErrorKind::unbound_variable, "record field " + n.field);
                return it->second;
            } else if constexpr (std::is_same_v<T, Expr::Unary>) {
                Value v = eval_expr(env, cfg, *n.operand);
                if (n.op == UnOp::lnot)
                    return Value(!v.as_bool());
                return Value(arith(BinOp::sub, 0, v.as_int()));
            } else if constexpr (std::is_same_v<T, Expr::Binary>) {
                if (n.op == BinOp::land || n.op == BinOp::lor) {
                    bool l = eval_expr(env, cfg, *n.lhs).as_bool();
                    if (n.op == BinOp::land && !l)
                        return Value(false);
                    if (n.op == BinOp::lor && l)
                        return Value(true);
                    return Value(eval_expr(env, cfg, *n.rhs).as_bool());
                }
                Value l = eval_expr(env, cfg, *n.lhs);
                Value r = eval_expr(env, cfg, *n.rhs);
                switch (n.op) {
                case BinOp::eq: return Value(l == r);
                case BinOp::ne: return Value(!(l == r));
                case BinOp::lt: return Value(l.as_int() < r.as_int());
                case BinOp::le: return Value(l.as_int() <= r.as_int());
                case BinOp::gt: return Value(l.as_int() > r.as_int());
                case BinOp::ge: return Value(l.as_int() >= r.as_int());
                default: return Value(arith(n.op, l.as_int(), r.as_int()));
                }
            } else if constexpr (std::is_same_v<T, Expr::RecordLit>) {
                auto rec = std::make_shared<Record>();
                for (const auto &[k, x] : n.fields)
                    rec->fields[k] = eval_expr(env, cfg, *x);
                return Value(RecordPtr(std::move(rec)));
            } else {
                std::int64_t count = 0;
                for (const auto &c : env.graph->children(env.self))
                    if (env.graph->class_of(c) == n.class_name)
                        ++count;
                return Value(count);
            }
        },
        e.node);
}

bool head_blocked(const Code &c)
{
    return c && (std::holds_alternative<Stmt::Waiting>(c->head->node) || std::holds_alternative<Stmt::Emit>(c->head->node));
}

std::pair<IntraConfig, Label> step_intra(const IntraEnv &env, IntraConfig cfg)
{
    if (head_blocked(cfg.code))
        throw Error(ErrorKind::stuck, "activation head is a runtime placeholder");
    while (cfg.code) {
        StmtPtr head = cfg.code->head;
        Code rest = cfg.code->tail;
        Label label;
        bool emitted = std::visit(
            [&](const auto &n) -> bool {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, Stmt::Skip>) {
                    cfg.code = rest;
                } else if constexpr (std::is_same_v<T, Stmt::LocalAssign>) {
                    Value v = eval_expr(env, cfg, *n.value);
                    if (cfg.lenv.empty())
                        cfg.lenv.emplace_back();
                    cfg.lenv.back()[n.var] = std::move(v);
                    cfg.code = rest;
                } else if constexpr (std::is_same_v<T, Stmt::FieldUpdate>) {
                    Value v = eval_expr(env, cfg, *n.value);
                    if (n.object == "self") {
                        if (cfg.am != AccessMode::ex)
                            throw Error(ErrorKind::access_violation,
                                        "write to " + env.self.value + "." + n.field + " in ro mode");
                        cfg.store[n.field] = std::move(v);
                    } else {
                        Value rec = lookup_var(cfg, n.object);
                        auto copy = std::make_shared<Record>(rec.as_record());
                        copy->fields[n.field] = std::move(v);
                        cfg.lenv.back()[n.object] = Value(RecordPtr(std::move(copy)));
                    }
                    cfg.code = rest;
                } else if constexpr (std::is_same_v<T, Stmt::SyncCall>) {
                    ContextId t = eval_target(env, cfg, n.call);
                    label.kind = Label::synch;
                    label.args = eval_args(env, cfg, n.call);
                    label.am = callee_method(env, t, n.call.method).access_mode;
                    label.method = n.call.method;
                    label.target = t;
                    cfg.code = cons(synth(Stmt::Waiting{n.result, t}), rest);
                    return true;
                } else if constexpr (std::is_same_v<T, Stmt::AsyncCall>) {
                    ContextId t = eval_target(env, cfg, n.call);
                    const MethodDef &m = callee_method(env, t, n.call.method);
                    if (m.returns_value)
                        throw Error(ErrorKind::type_mismatch, "async call to value-returning " + m.class_name + "." + m.name);
                    label.kind = Label::asynch;
                    label.args = eval_args(env, cfg, n.call);
                    label.am = m.access_mode;
                    label.method = n.call.method;
                    label.target = t;
                    cfg.code = cons(synth(Stmt::Emit{}), rest);
                    return true;
                } else if constexpr (std::is_same_v<T, Stmt::EventDispatch>) {
                    ContextId t = eval_target(env, cfg, n.call);
                    const MethodDef &m = callee_method(env, t, n.call.method);
                    label.kind = Label::event;
                    label.args = eval_args(env, cfg, n.call);
                    label.am = m.access_mode;
                    label.method = n.call.method;
                    label.target = t;
                    cfg.code = rest;
                    return true;
                } else if constexpr (std::is_same_v<T, Stmt::Return>) {
                    label.kind = Label::ret;
                    label.value = n.value ? deep_copy(eval_expr(env, cfg, *n.value)) : Value(Unit{});
                    if (cfg.lenv.size() != 1)
                        throw Error(ErrorKind::stuck, "return with " + std::to_string(cfg.lenv.size()) + " frames");
                    cfg.lenv.clear();
                    cfg.code = nullptr;
                    return true;
                } else if constexpr (std::is_same_v<T, Stmt::If>) {
                    bool c = eval_expr(env, cfg, *n.cond).as_bool();
                    cfg.code = prepend(c ? n.then_branch : n.else_branch, rest);
                } else if constexpr (std::is_same_v<T, Stmt::Repeat>) {
                    if (n.count <= 0) {
                        cfg.code = rest;
                    } else {
                        Code tail = rest;
                        if (n.count > 1)
                            tail = cons(synth(Stmt::Repeat{n.count - 1, n.body}), rest);
                        cfg.code = prepend(n.body, tail);
                    }
                } else if constexpr (std::is_same_v<T, Stmt::ForChildren>) {
                    std::vector<ContextId> kids;
                    for (const auto &c : env.graph->children(env.self))
                        if (env.graph->class_of(c) == n.class_name)
                            kids.push_back(c);
                    Code code = rest;
                    for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
                        code = prepend(n.body, code);
                        code = cons(synth(Stmt::LocalAssign{n.var, literal(Value(*it))}), code);
                    }
                    cfg.code = code;
                } else if constexpr (std::is_same_v<T, Stmt::AddOwnership> ||
                                     std::is_same_v<T, Stmt::RemoveOwnership>) {
                    if (cfg.am != AccessMode::ex)
                        throw Error(ErrorKind::access_violation, "ownership change in ro mode");
                    label.kind = std::is_same_v<T, Stmt::AddOwnership> ? Label::add_owner : Label::remove_owner;
                    label.target = eval_expr(env, cfg, *n.parent).as_context();
                    label.child = eval_expr(env, cfg, *n.child).as_context();
                    cfg.code = rest;
                    return true;
                } else if constexpr (std::is_same_v<T, Stmt::Snapshot>) {
                    label.kind = Label::snapshot;
                    cfg.code = rest;
                    return true;
                } else {
                    throw Error(ErrorKind::stuck, "runtime placeholder reached");
                }
                return false;
            },
            head->node);
        if (emitted)
            return {std::move(cfg), std::move(label)};
    }
    // fell off the end without a return
    Label label;
    label.kind = Label::ret;
    label.value = Value(Unit{});
    if (cfg.lenv.size() != 1)
        throw Error(ErrorKind::stuck, "return with " + std::to_string(cfg.lenv.size()) + " frames");
    cfg.lenv.clear();
    return {std::move(cfg), std::move(label)};
}

IntraConfig resume_with_return(IntraConfig cfg, const ContextId &callee, const Value &v)
{
    std::vector<StmtPtr> prefix;
    const CodeNode *found = nullptr;
    int matches = 0;
    for (const CodeNode *p = cfg.code.get(); p; p = p->tail.get()) {
        if (auto w = std::get_if<Stmt::Waiting>(&p->head->node); w && w->callee == callee) {
            ++matches;
            if (!found)
                found = p;
        }
    }
    if (matches == 0)
        throw Error(ErrorKind::no_waiting_placeholder, callee.value);
    if (matches > 1)
        throw Error(ErrorKind::protocol_violation, "several waiting placeholders for " + callee.value);
    for (const CodeNode *p = cfg.code.get(); p != found; p = p->tail.get())
        prefix.push_back(p->head);
    const auto &w = std::get<Stmt::Waiting>(found->head->node);
    StmtPtr replacement = w.result ? synth(Stmt::LocalAssign{*w.result, literal(v)}) : synth(Stmt::Skip{});
    Code code = cons(replacement, found->tail);
    cfg.code = prepend(prefix, code);
    return cfg;
}

IntraConfig enter_method(const MethodDef &m, const std::vector<Value> &args, Store store, Env genv, AccessMode am)
{
    if (args.size() != m.params.size())
        throw Error(ErrorKind::type_mismatch, m.class_name + "." + m.name + " expects " +
                                                  std::to_string(m.params.size()) + " arguments, got " +
                                                  std::to_string(args.size()));
    IntraConfig cfg;
    cfg.store = std::move(store);
    cfg.genv = std::move(genv);
    Env frame;
    for (std::size_t i = 0; i < args.size(); ++i)
        frame[m.params[i].name] = deep_copy(args[i]);
    cfg.lenv.push_back(std::move(frame));
    cfg.code = prepend(m.body, nullptr);
    cfg.am = am;
    return cfg;
}

std::string canonical(const Code &c)
{
    std::string s;
    for (const CodeNode *p = c.get(); p; p = p->tail.get()) {
        const Stmt &st = *p->head;
        if (st.id != 0) {
            s += '#';
            s += std::to_string(st.id);
            s += ';';
            continue;
        }
        std::visit(
            [&](const auto &n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, Stmt::Skip>) {
                    s += "K;";
                } else if constexpr (std::is_same_v<T, Stmt::LocalAssign>) {
                    s += "A(" + n.var + "=";
                    if (auto lit = std::get_if<Expr::Literal>(&n.value->node))
                        s += to_string(lit->value);
                    else
                        s += "?";
                    s += ");";
                } else if constexpr (std::is_same_v<T, Stmt::Waiting>) {
                    s += "W(" + n.result.value_or("") + "," + n.callee.value + ");";
                } else if constexpr (std::is_same_v<T, Stmt::Emit>) {
                    s += "E;";
                } else if constexpr (std::is_same_v<T, Stmt::Snapshot>) {
                    s += "S;";
                } else if constexpr (std::is_same_v<T, Stmt::Return>) {
                    s += "X;";
                } else if constexpr (std::is_same_v<T, Stmt::Repeat>) {
                    s += "R(" + std::to_string(n.count) + ":";
                    for (const auto &b : n.body)
                        s += std::to_string(b->id) + ",";
                    s += ");";
                } else {
                    s += "?;";
                }
            },
            st.node);
    }
    return s;
}

} // namespace aeon
