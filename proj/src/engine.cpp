#include "aeon/engine.hpp"
#include "aeon/error.hpp"

#include <algorithm>
#include <random>

namespace aeon {

namespace {

const std::string kSnapshotMethod = "__snapshot";
const std::string kMigrateMethod = "__migrate";

StmtPtr system_stmt(Stmt::Snapshot s)
{
    auto p = std::make_shared<Stmt>();
    p->node = s;
    return p;
}

StmtPtr system_return()
{
    auto p = std::make_shared<Stmt>();
    p->node = Stmt::Return{nullptr};
    return p;
}

void record(GlobalConfig &cfg, std::string rule, const ContextId &ctx, const EventId &eid, std::string detail,
            const TransitionChoice &choice)
{
    if (!cfg.options.record_trace)
        return;
    auto n = std::make_shared<TraceNode>();
    n->entry.step = cfg.steps;
    n->entry.rule = std::move(rule);
    n->entry.ctx = ctx;
    n->entry.eid = eid;
    n->entry.detail = std::move(detail);
    n->entry.choice = cfg.applying ? *cfg.applying : choice;
    n->prev = cfg.trace;
    cfg.trace = std::move(n);
}

void touch(GlobalConfig &cfg, const EventId &eid, const ContextId &ctx)
{
    if (cfg.options.track_touched)
        cfg.touched[eid].insert(ctx);
}

std::string args_text(const std::vector<Value> &args)
{
    std::string s = "(";
    for (std::size_t i = 0; i < args.size(); ++i)
        s += (i ? ", " : "") + to_string(args[i]);
    return s + ")";
}

void enqueue(GlobalConfig &cfg, const ContextId &at, Request r)
{
    r.seq = cfg.next_seq++;
    cfg.ctx(at).queue.push_back(std::move(r));
}

// Running activation becomes the lock placeholder form; duplicates collapse.
void to_placeholder(ContextInstance &c, std::size_t idx)
{
    EventId eid = c.activations[idx].eid;
    for (std::size_t i = 0; i < c.activations.size(); ++i) {
        if (i != idx && c.activations[i].eid == eid && !c.activations[i].running) {
            c.activations.erase(c.activations.begin() + static_cast<std::ptrdiff_t>(idx));
            return;
        }
    }
    Activation &a = c.activations[idx];
    a.running = false;
    a.lenv.clear();
    a.code = nullptr;
}

void add_placeholder(ContextInstance &c, const EventId &eid, AccessMode am)
{
    if (c.has_placeholder(eid))
        return;
    Activation a;
    a.eid = eid;
    a.am = am;
    a.running = false;
    c.activations.push_back(std::move(a));
}

bool lockable(const ContextInstance &c, const EventId &eid, AccessMode am)
{
    if (am == AccessMode::ex)
        return c.only_event(eid);
    return !c.has_ex_other_than(eid);
}

// Early-started events must stay clear of what the events they jumped might touch.
bool guarded(const GlobalConfig &cfg, const EventId &eid, const ContextId &node)
{
    const EventInfo *e = cfg.find_event(eid);
    if (!e || !e->early_started || e->marker_admitted)
        return false;
    for (const auto &w : e->waiting_on) {
        const EventInfo *we = cfg.find_event(w);
        if (!we)
            continue;
        if (cfg.contexts.at(node).holds(w))
            return true;
        if (cfg.graph->contains(we->target) && cfg.graph->reaches(we->target, node))
            return true;
    }
    return false;
}

struct Need {
    enum Kind { ready, lock, blocked };
    Kind kind = ready;
    ContextId node;
};

Need lock_step(const GlobalConfig &cfg, const EventId &eid, AccessMode am, const ContextId &node)
{
    const ContextInstance &c = cfg.contexts.at(node);
    if (lockable(c, eid, am) && !guarded(cfg, eid, node))
        return {Need::lock, node};
    return {Need::blocked, node};
}

// What must be locked before a call from `from` to `target` can be queued.
Need call_need(const GlobalConfig &cfg, const EventId &eid, AccessMode am, const ContextId &from,
               const ContextId &target)
{
    const OwnershipGraph &g = *cfg.graph;
    if (!g.contains(target) || cfg.contexts.at(target).holds(eid))
        return {};
    if (g.children(from).count(target))
        return {};
    auto path = g.path(from, target);
    if (!path)
        return {}; // illegal; the lift aborts the event
    for (std::size_t i = 1; i + 1 < path->size(); ++i) {
        const ContextId &n = (*path)[i];
        if (!cfg.contexts.at(n).holds(eid))
            return lock_step(cfg, eid, am, n);
    }
    return {};
}

Need endpoints_need(const GlobalConfig &cfg, const EventId &eid, AccessMode am, const ContextId &from,
                    const std::vector<ContextId> &nodes)
{
    const OwnershipGraph &g = *cfg.graph;
    for (const auto &target : nodes) {
        if (!g.contains(target) || cfg.contexts.at(target).holds(eid))
            continue;
        auto path = g.path(from, target);
        if (!path)
            continue;
        for (std::size_t i = 1; i < path->size(); ++i) {
            const ContextId &n = (*path)[i];
            if (!cfg.contexts.at(n).holds(eid))
                return lock_step(cfg, eid, am, n);
        }
    }
    return {};
}

Need snapshot_need(const GlobalConfig &cfg, const EventId &eid, AccessMode am, const ContextId &root)
{
    const OwnershipGraph &g = *cfg.graph;
    for (const auto &d : g.descendants(root)) {
        if (cfg.contexts.at(d).holds(eid))
            continue;
        for (const auto &p : g.parents(d))
            if (cfg.contexts.at(p).holds(eid))
                return lock_step(cfg, eid, am, d);
    }
    return {};
}

struct Peek {
    bool error = false;
    Label label;
};

Peek peek(const GlobalConfig &cfg, const ContextInstance &c, const Activation &a)
{
    IntraEnv env{cfg.program.get(), cfg.graph.get(), c.id};
    IntraConfig ic{c.store, c.genv, a.lenv, a.code, a.am};
    try {
        auto [next, label] = step_intra(env, std::move(ic));
        return {false, std::move(label)};
    } catch (const Error &) {
        return {true, {}};
    }
}

Need lift_need(const GlobalConfig &cfg, const ContextInstance &c, const Activation &a)
{
    Peek p = peek(cfg, c, a);
    if (p.error)
        return {};
    switch (p.label.kind) {
    case Label::synch:
    case Label::asynch: return call_need(cfg, a.eid, a.am, c.id, p.label.target);
    case Label::add_owner:
    case Label::remove_owner: return endpoints_need(cfg, a.eid, a.am, c.id, {p.label.target, p.label.child});
    case Label::snapshot: return snapshot_need(cfg, a.eid, a.am, c.id);
    default: return {};
    }
}

bool call_legal(const GlobalConfig &cfg, const EventId &eid, const ContextId &from, const ContextId &target)
{
    const OwnershipGraph &g = *cfg.graph;
    if (!g.contains(target))
        return false;
    if (cfg.contexts.at(target).holds(eid))
        return true;
    if (g.children(from).count(target))
        return true;
    auto path = g.path(from, target);
    if (!path)
        return false;
    for (std::size_t i = 1; i + 1 < path->size(); ++i)
        if (!cfg.contexts.at((*path)[i]).holds(eid))
            return false;
    return true;
}

void sync_virtual_contexts(GlobalConfig &cfg)
{
    for (const auto &v : cfg.graph->virtual_nodes()) {
        if (cfg.contexts.count(v))
            continue;
        ContextInstance c;
        c.id = v;
        c.is_virtual = true;
        cfg.contexts.emplace(v, std::move(c));
    }
}

AccessMode method_mode(const GlobalConfig &cfg, const ContextId &target, const std::string &method)
{
    if (method == kSnapshotMethod)
        return AccessMode::ro;
    if (method == kMigrateMethod)
        return AccessMode::ex;
    if (!cfg.graph->contains(target) || cfg.graph->is_virtual(target))
        throw Error(ErrorKind::unknown_context, target.value);
    const std::string &cls = cfg.graph->class_of(target);
    const MethodDef *m = cfg.program->find_method(cls, method);
    if (!m)
        throw Error(ErrorKind::unknown_method, cls + "." + method);
    return m->access_mode;
}

EventId new_event(GlobalConfig &cfg, const ContextId &target, const std::string &method,
                  const std::vector<Value> &args, EventKind kind, std::optional<EventId> parent)
{
    AccessMode am = method_mode(cfg, target, method);
    EventInfo e;
    e.eid = EventId{cfg.next_eid++};
    e.kind = kind;
    e.target = target;
    e.method = method;
    e.args = args;
    e.am = am;
    e.issue_tick = cfg.clock;
    e.commits_before_issue = cfg.finished.size();
    e.parent = parent;
    EventId eid = e.eid;
    cfg.events.emplace(eid, std::move(e));
    return eid;
}

void route_event(GlobalConfig &cfg, const EventId &eid, const TransitionChoice &choice)
{
    EventInfo &e = cfg.events.at(eid);
    ContextId dom = cfg.options.dominator_sequencing ? cfg.graph->dominator(e.target) : e.target;
    if (e.kind == EventKind::migrate)
        dom = e.target;
    e.dominator = dom;
    Request r;
    r.eid = eid;
    r.method = e.method;
    r.args = e.args;
    r.decorator = Decorator::event;
    r.am = e.am;
    std::string rule;
    if (dom == e.target) {
        e.marker_admitted = true;
        enqueue(cfg, e.target, std::move(r));
        rule = "event_call_unshared";
    } else {
        r.lub_marker = true;
        r.target = e.target;
        enqueue(cfg, dom, std::move(r));
        rule = "event_call_shared";
    }
    touch(cfg, eid, dom);
    record(cfg, rule, dom, eid, e.target.value + "." + e.method + args_text(e.args), choice);
}

// Dispatch to a missing context or method: the event fails without running.
void fail_dispatch(GlobalConfig &cfg, const ContextId &target, const std::string &method,
                   const std::vector<Value> &args, EventKind kind, std::optional<EventId> parent,
                   const std::string &reason)
{
    EventInfo bad;
    bad.eid = EventId{cfg.next_eid++};
    bad.kind = kind;
    bad.target = target;
    bad.method = method;
    bad.args = args;
    bad.issue_tick = cfg.clock;
    bad.commit_tick = cfg.clock;
    bad.commits_before_issue = cfg.finished.size();
    bad.failed = true;
    bad.failure = reason;
    bad.parent = parent;
    cfg.finished.push_back(std::move(bad));
}

IntraConfig activation_config(const ContextInstance &c, const Activation &a)
{
    return IntraConfig{c.store, c.genv, a.lenv, a.code, a.am};
}

} // namespace

const char *to_string(Decorator d)
{
    switch (d) {
    case Decorator::synch: return "synch";
    case Decorator::asynch: return "asynch";
    case Decorator::event: return "event";
    }
    return "?";
}

const char *to_string(EventKind k)
{
    switch (k) {
    case EventKind::client: return "client";
    case EventKind::nested: return "nested";
    case EventKind::snapshot: return "snapshot";
    case EventKind::migrate: return "migrate";
    }
    return "?";
}

const char *to_string(TransitionChoice::Kind k)
{
    switch (k) {
    case TransitionChoice::dispatch: return "dispatch";
    case TransitionChoice::activate: return "activate";
    case TransitionChoice::promote: return "promote";
    case TransitionChoice::lift: return "lift";
    case TransitionChoice::auto_lock: return "auto_lock";
    case TransitionChoice::commit: return "commit";
    case TransitionChoice::early_start: return "early_start";
    }
    return "?";
}

std::optional<TransitionChoice::Kind> choice_kind_from_string(const std::string &s)
{
    for (int k = TransitionChoice::dispatch; k <= TransitionChoice::early_start; ++k)
        if (s == to_string(static_cast<TransitionChoice::Kind>(k)))
            return static_cast<TransitionChoice::Kind>(k);
    return std::nullopt;
}

std::string TransitionChoice::str() const
{
    return std::string(to_string(kind)) + "(" + ctx.value + "," + eid.str() + "," + std::to_string(index) + ")";
}

bool ContextInstance::holds(const EventId &e) const
{
    for (const auto &a : activations)
        if (a.eid == e)
            return true;
    return false;
}

bool ContextInstance::has_placeholder(const EventId &e) const
{
    for (const auto &a : activations)
        if (a.eid == e && !a.running)
            return true;
    return false;
}

bool ContextInstance::has_ex_other_than(const EventId &e) const
{
    for (const auto &a : activations)
        if (a.am == AccessMode::ex && a.eid != e)
            return true;
    return false;
}

bool ContextInstance::only_event(const EventId &e) const
{
    for (const auto &a : activations)
        if (a.eid != e)
            return false;
    return true;
}

bool ContextInstance::has_ex() const
{
    for (const auto &a : activations)
        if (a.am == AccessMode::ex)
            return true;
    return false;
}

const ContextInstance &GlobalConfig::ctx(const ContextId &id) const
{
    auto it = contexts.find(id);
    if (it == contexts.end())
        throw Error(ErrorKind::unknown_context, id.value);
    return it->second;
}

ContextInstance &GlobalConfig::ctx(const ContextId &id)
{
    auto it = contexts.find(id);
    if (it == contexts.end())
        throw Error(ErrorKind::unknown_context, id.value);
    return it->second;
}

const EventInfo *GlobalConfig::find_event(const EventId &e) const
{
    auto it = events.find(e);
    return it == events.end() ? nullptr : &it->second;
}

std::vector<TraceEntry> trace_entries(const TraceList &t)
{
    std::vector<TraceEntry> out;
    for (const TraceNode *n = t.get(); n; n = n->prev.get())
        out.push_back(n->entry);
    std::reverse(out.begin(), out.end());
    return out;
}

GlobalConfig initial_config(std::shared_ptr<const Program> program, EngineOptions options,
                            std::optional<std::vector<ScriptEntry>> script)
{
    GlobalConfig cfg;
    cfg.options = options;
    cfg.graph = std::make_shared<const OwnershipGraph>(program->build_graph());
    for (const auto &inst : program->instances) {
        ContextInstance c;
        c.id = inst.id;
        c.class_name = inst.class_name;
        c.store = program->initial_store(inst);
        cfg.contexts.emplace(inst.id, std::move(c));
    }
    cfg.script = std::make_shared<const std::vector<ScriptEntry>>(script ? std::move(*script) : program->main_script);
    cfg.program = std::move(program);
    sync_virtual_contexts(cfg);
    return cfg;
}

EventId dispatch_event(GlobalConfig &cfg, const ContextId &target, const std::string &method,
                       const std::vector<Value> &args, EventKind kind, std::optional<EventId> parent)
{
    EventId eid = new_event(cfg, target, method, args, kind, parent);
    route_event(cfg, eid, TransitionChoice{TransitionChoice::dispatch, target, eid, 0});
    return eid;
}

EventId dispatch_snapshot(GlobalConfig &cfg, const ContextId &root)
{
    return dispatch_event(cfg, root, kSnapshotMethod, {}, EventKind::snapshot);
}

EventId dispatch_system_event(GlobalConfig &cfg, const ContextId &ctx)
{
    return dispatch_event(cfg, ctx, kMigrateMethod, {}, EventKind::migrate);
}

bool head_admissible(const GlobalConfig &cfg, const ContextId &id)
{
    const ContextInstance &c = cfg.ctx(id);
    if (c.queue.empty())
        return false;
    const Request &r = c.queue.front();
    if (r.lub_marker) {
        if (r.am == AccessMode::ex)
            return c.activations.empty();
        return !c.has_ex();
    }
    if (guarded(cfg, r.eid, id))
        return false;
    if (r.am == AccessMode::ex)
        return c.only_event(r.eid);
    return !c.has_ex_other_than(r.eid);
}

bool activate_head(GlobalConfig &cfg, const ContextId &id)
{
    if (!head_admissible(cfg, id))
        return false;
    TransitionChoice choice{TransitionChoice::activate, id, {}, 0};
    ContextInstance &c = cfg.ctx(id);
    Request r = std::move(c.queue.front());
    c.queue.erase(c.queue.begin());
    choice.eid = r.eid;
    touch(cfg, r.eid, id);
    if (r.lub_marker) {
        add_placeholder(c, r.eid, r.am);
        EventInfo &e = cfg.events.at(r.eid);
        e.marker_admitted = true;
        std::string rule = r.am == AccessMode::ex ? "lub_lock_schedule_ex" : "lub_lock_schedule_ro";
        if (!e.early_started) {
            Request fwd;
            fwd.eid = r.eid;
            fwd.method = r.method;
            fwd.args = r.args;
            fwd.decorator = Decorator::event;
            fwd.am = r.am;
            enqueue(cfg, r.target, std::move(fwd));
        }
        record(cfg, rule, id, r.eid, "forward to " + r.target.value, choice);
        return true;
    }
    Activation a;
    a.eid = r.eid;
    a.am = r.am;
    a.running = true;
    a.decorator = r.decorator;
    a.reply_to = r.reply_to;
    std::string rule = r.am == AccessMode::ex ? "exclusive_access" : "readonly_access";
    if (r.method == kSnapshotMethod || r.method == kMigrateMethod) {
        a.lenv.emplace_back();
        a.code = cons(system_return(), nullptr);
        if (r.method == kSnapshotMethod)
            a.code = cons(system_stmt(Stmt::Snapshot{}), a.code);
    } else {
        const MethodDef *m = cfg.program->find_method(c.class_name, r.method);
        if (!m || m->params.size() != r.args.size()) {
            c.activations.push_back(std::move(a));
            record(cfg, rule, id, r.eid, r.method, choice);
            abort_event(cfg, r.eid, "unknown method or arity " + c.class_name + "." + r.method);
            return true;
        }
        IntraConfig ic = enter_method(*m, r.args, {}, {}, r.am);
        a.lenv = std::move(ic.lenv);
        a.code = std::move(ic.code);
    }
    c.activations.push_back(std::move(a));
    record(cfg, rule, id, r.eid, std::string(to_string(r.decorator)) + " " + r.method + args_text(r.args), choice);
    return true;
}

void handle_sync_call(GlobalConfig &cfg, const ContextId &caller, const EventId &eid, const Label &label)
{
    if (!call_legal(cfg, eid, caller, label.target))
        throw Error(ErrorKind::illegal_target, caller.value + " -> " + label.target.value);
    const EventInfo &e = cfg.events.at(eid);
    Request r;
    r.eid = eid;
    r.method = label.method;
    r.args = label.args;
    r.decorator = Decorator::synch;
    r.reply_to = caller;
    r.am = e.am;
    enqueue(cfg, label.target, std::move(r));
}

void handle_async_call(GlobalConfig &cfg, const ContextId &caller, std::size_t activation, const Label &label)
{
    ContextInstance &c = cfg.ctx(caller);
    Activation &a = c.activations.at(activation);
    if (!call_legal(cfg, a.eid, caller, label.target))
        throw Error(ErrorKind::illegal_target, caller.value + " -> " + label.target.value);
    Request r;
    r.eid = a.eid;
    r.method = label.method;
    r.args = label.args;
    r.decorator = Decorator::asynch;
    r.am = cfg.events.at(a.eid).am;
    if (a.code && std::holds_alternative<Stmt::Emit>(a.code->head->node))
        a.code = a.code->tail;
    enqueue(cfg, label.target, std::move(r));
}

void handle_sync_return(GlobalConfig &cfg, const ContextId &callee, std::size_t activation, const Value &v)
{
    const Activation &ret = cfg.ctx(callee).activations.at(activation);
    EventId eid = ret.eid;
    ContextId reply_to = ret.reply_to;
    // several activations of one event may wait on the same callee; the recorded caller decides
    std::vector<std::pair<ContextInstance *, std::size_t>> waiting;
    for (auto &[id, c] : cfg.contexts) {
        for (std::size_t i = 0; i < c.activations.size(); ++i) {
            const Activation &a = c.activations[i];
            if (a.eid != eid || !a.running || !a.code)
                continue;
            for (const CodeNode *p = a.code.get(); p; p = p->tail.get()) {
                auto w = std::get_if<Stmt::Waiting>(&p->head->node);
                if (w && w->callee == callee) {
                    waiting.emplace_back(&c, i);
                    break;
                }
            }
        }
    }
    if (waiting.size() > 1)
        std::erase_if(waiting, [&](const auto &w) { return w.first->id != reply_to; });
    if (waiting.empty())
        throw Error(ErrorKind::protocol_violation, "no activation of " + eid.str() + " waits on " + callee.value);
    auto [caller, caller_idx] = waiting.front();
    Activation &a = caller->activations[caller_idx];
    IntraConfig ic = resume_with_return(activation_config(*caller, a), callee, v);
    a.code = std::move(ic.code);
    to_placeholder(cfg.ctx(callee), activation);
}

void handle_async_return(GlobalConfig &cfg, const ContextId &ctx, std::size_t activation)
{
    to_placeholder(cfg.ctx(ctx), activation);
}

void lift_intra(GlobalConfig &cfg, const ContextId &id, std::size_t idx)
{
    TransitionChoice choice{TransitionChoice::lift, id, {}, idx};
    ContextInstance &c = cfg.ctx(id);
    if (idx >= c.activations.size() || !c.activations[idx].running)
        throw Error(ErrorKind::stale_choice, "no running activation " + std::to_string(idx) + " at " + id.value);
    Activation &a = c.activations[idx];
    EventId eid = a.eid;
    choice.eid = eid;
    touch(cfg, eid, id);
    IntraEnv env{cfg.program.get(), cfg.graph.get(), id};
    std::pair<IntraConfig, Label> step;
    try {
        step = step_intra(env, activation_config(c, a));
    } catch (const Error &err) {
        record(cfg, "lift_intra/abort", id, eid, err.what(), choice);
        abort_event(cfg, eid, err.what());
        return;
    }
    auto &[ic, label] = step;
    c.store = std::move(ic.store);
    a.lenv = std::move(ic.lenv);
    a.code = std::move(ic.code);
    const std::string detail = label.str();
    try {
        switch (label.kind) {
        case Label::ret: {
            Decorator d = a.decorator;
            if (d == Decorator::synch) {
                handle_sync_return(cfg, id, idx, label.value);
                record(cfg, "lift_intra/synch_return", id, eid, detail, choice);
            } else if (d == Decorator::asynch) {
                handle_async_return(cfg, id, idx);
                record(cfg, "lift_intra/asynch_return", id, eid, detail, choice);
            } else {
                EventInfo &e = cfg.events.at(eid);
                e.entry_returned = true;
                e.result = label.value;
                to_placeholder(c, idx);
                record(cfg, "lift_intra/event_return", id, eid, detail, choice);
            }
            break;
        }
        case Label::synch:
            handle_sync_call(cfg, id, eid, label);
            record(cfg, "lift_intra/synch_call", id, eid, detail, choice);
            break;
        case Label::asynch:
            handle_async_call(cfg, id, idx, label);
            record(cfg, "lift_intra/asynch_call", id, eid, detail, choice);
            break;
        case Label::event:
            if (!cfg.options.suppress_nested)
                cfg.pending_nested[eid].push_back({label.target, label.method, label.args});
            record(cfg, "lift_intra/nested_event", id, eid, detail, choice);
            break;
        case Label::add_owner:
        case Label::remove_owner: {
            if (!cfg.graph->contains(label.target) || !cfg.graph->contains(label.child) ||
                !cfg.ctx(label.target).holds(eid) || !cfg.ctx(label.child).holds(eid))
                throw Error(ErrorKind::illegal_target, "ownership change needs both ends locked: " + detail);
            auto g = std::make_shared<OwnershipGraph>(*cfg.graph);
            if (label.kind == Label::add_owner)
                g->add_ownership(label.target, label.child);
            else
                g->remove_ownership(label.target, label.child);
            cfg.graph = std::move(g);
            sync_virtual_contexts(cfg);
            record(cfg, "lift_intra/ownership", id, eid, detail, choice);
            break;
        }
        case Label::snapshot: {
            SnapshotRecord rec;
            rec.eid = eid;
            rec.root = id;
            ContextSet nodes = cfg.graph->descendants(id);
            nodes.insert(id);
            for (const auto &n : nodes) {
                const ContextInstance &nc = cfg.ctx(n);
                if (!nc.holds(eid))
                    throw Error(ErrorKind::protocol_violation, "snapshot without lock on " + n.value);
                if (nc.is_virtual)
                    continue;
                auto ci = cfg.program->class_info.find(nc.class_name);
                if (ci != cfg.program->class_info.end() && ci->second.snapshot_skip)
                    continue;
                rec.stores[n] = nc.store;
            }
            cfg.snapshots[eid] = std::move(rec);
            record(cfg, "lift_intra/snapshot", id, eid, detail, choice);
            break;
        }
        case Label::silent: break;
        }
    } catch (const Error &err) {
        if (err.kind() == ErrorKind::protocol_violation)
            throw;
        record(cfg, "lift_intra/abort", id, eid, err.what(), choice);
        abort_event(cfg, eid, err.what());
    }
}

bool commit_eligible(const GlobalConfig &cfg, const EventId &eid)
{
    const EventInfo *e = cfg.find_event(eid);
    if (!e || !e->entry_returned || !e->marker_admitted)
        return false;
    for (const auto &[id, c] : cfg.contexts) {
        for (const auto &a : c.activations)
            if (a.eid == eid && a.running)
                return false;
        for (const auto &r : c.queue)
            if (r.eid == eid)
                return false;
    }
    return true;
}

void commit_event(GlobalConfig &cfg, const EventId &eid)
{
    if (!commit_eligible(cfg, eid))
        throw Error(ErrorKind::premature_commit, eid.str());
    TransitionChoice choice{TransitionChoice::commit, {}, eid, 0};
    std::string released;
    for (auto &[id, c] : cfg.contexts) {
        auto before = c.activations.size();
        std::erase_if(c.activations, [&](const Activation &a) { return a.eid == eid; });
        if (c.activations.size() != before)
            released += (released.empty() ? "" : ",") + id.value;
    }
    EventInfo e = std::move(cfg.events.at(eid));
    cfg.events.erase(eid);
    e.commit_tick = cfg.clock;
    const EventInfo &target_info = e;
    record(cfg, "event_return_commit", target_info.target, eid, "released " + released, choice);
    auto pending = std::move(cfg.pending_nested[eid]);
    cfg.pending_nested.erase(eid);
    cfg.finished.push_back(std::move(e));
    for (const auto &p : pending) {
        ++cfg.clock;
        try {
            dispatch_event(cfg, p.target, p.method, p.args, EventKind::nested, eid);
        } catch (const Error &err) {
            fail_dispatch(cfg, p.target, p.method, p.args, EventKind::nested, eid, err.what());
        }
    }
}

void abort_event(GlobalConfig &cfg, const EventId &eid, const std::string &reason)
{
    for (auto &[id, c] : cfg.contexts) {
        std::erase_if(c.activations, [&](const Activation &a) { return a.eid == eid; });
        std::erase_if(c.queue, [&](const Request &r) { return r.eid == eid; });
    }
    auto it = cfg.events.find(eid);
    if (it == cfg.events.end())
        return;
    EventInfo e = std::move(it->second);
    cfg.events.erase(it);
    e.failed = true;
    e.failure = reason;
    e.commit_tick = cfg.clock;
    cfg.pending_nested.erase(eid);
    cfg.finished.push_back(std::move(e));
}

bool auto_lock_path(GlobalConfig &cfg, const EventId &eid, const ContextId &from, const ContextId &to)
{
    auto path = cfg.graph->path(from, to);
    if (!path)
        throw Error(ErrorKind::illegal_target, from.value + " -> " + to.value);
    AccessMode am = cfg.events.at(eid).am;
    for (std::size_t i = 1; i + 1 < path->size(); ++i) {
        ContextInstance &c = cfg.ctx((*path)[i]);
        if (c.holds(eid))
            continue;
        if (!lockable(c, eid, am) || guarded(cfg, eid, c.id))
            return false;
        add_placeholder(c, eid, am);
        touch(cfg, eid, c.id);
        record(cfg, "auto_lock", c.id, eid, "path " + from.value + " -> " + to.value,
               TransitionChoice{TransitionChoice::auto_lock, c.id, eid, 0});
    }
    return true;
}

std::vector<TransitionChoice> enabled_transitions(const GlobalConfig &cfg)
{
    std::vector<TransitionChoice> out;
    if (cfg.next_script < cfg.script->size() && (!cfg.options.linear || cfg.events.empty()))
        out.push_back({TransitionChoice::dispatch, (*cfg.script)[cfg.next_script].target, {}, cfg.next_script});
    std::set<std::pair<ContextId, EventId>> locks;
    std::set<EventId> busy;
    for (const auto &[id, c] : cfg.contexts) {
        for (const auto &r : c.queue)
            busy.insert(r.eid);
        for (const auto &a : c.activations)
            if (a.running)
                busy.insert(a.eid);
        if (head_admissible(cfg, id))
            out.push_back({TransitionChoice::activate, id, c.queue.front().eid, 0});
        for (std::size_t i = 1; i < c.queue.size(); ++i) {
            const Request &r = c.queue[i];
            if (r.lub_marker || !c.holds(r.eid))
                continue;
            bool earlier = false;
            for (std::size_t k = 0; k < i; ++k)
                if (c.queue[k].eid == r.eid)
                    earlier = true;
            if (!earlier)
                out.push_back({TransitionChoice::promote, id, r.eid, i});
        }
        if (cfg.options.opt_unshared_start) {
            for (std::size_t i = 0; i < c.queue.size(); ++i) {
                const Request &r = c.queue[i];
                if (!r.lub_marker || (i == 0 && head_admissible(cfg, id)))
                    continue;
                const EventInfo *e = cfg.find_event(r.eid);
                if (e && !e->early_started)
                    out.push_back({TransitionChoice::early_start, id, r.eid, i});
            }
        }
        for (std::size_t i = 0; i < c.activations.size(); ++i) {
            const Activation &a = c.activations[i];
            if (!a.running || head_blocked(a.code))
                continue;
            Need n = lift_need(cfg, c, a);
            if (n.kind == Need::ready)
                out.push_back({TransitionChoice::lift, id, a.eid, i});
            else if (n.kind == Need::lock && locks.insert({n.node, a.eid}).second)
                out.push_back({TransitionChoice::auto_lock, n.node, a.eid, 0});
        }
    }
    for (const auto &[eid, e] : cfg.events)
        if (e.entry_returned && e.marker_admitted && !busy.count(eid))
            out.push_back({TransitionChoice::commit, e.target, eid, 0});
    return out;
}

namespace {

void apply_choice(GlobalConfig &cfg, const TransitionChoice &ch);

void apply_unchecked(GlobalConfig &cfg, const TransitionChoice &ch)
{
    ++cfg.clock;
    ++cfg.steps;
    cfg.applying = ch;
    try {
        apply_choice(cfg, ch);
    } catch (...) {
        cfg.applying.reset();
        throw;
    }
    cfg.applying.reset();
}

void apply_choice(GlobalConfig &cfg, const TransitionChoice &ch)
{
    switch (ch.kind) {
    case TransitionChoice::dispatch: {
        const ScriptEntry &s = (*cfg.script)[cfg.next_script++];
        EventKind k = s.kind == ScriptEntry::snapshot ? EventKind::snapshot : EventKind::client;
        std::string method = s.kind == ScriptEntry::snapshot ? kSnapshotMethod : s.method;
        try {
            EventId eid = new_event(cfg, s.target, method, s.args, k, std::nullopt);
            route_event(cfg, eid, TransitionChoice{TransitionChoice::dispatch, s.target, {}, ch.index});
        } catch (const Error &err) {
            fail_dispatch(cfg, s.target, method, s.args, k, std::nullopt, err.what());
            record(cfg, "dispatch/fail", s.target, EventId{cfg.next_eid - 1}, err.what(), ch);
        }
        break;
    }
    case TransitionChoice::activate: activate_head(cfg, ch.ctx); break;
    case TransitionChoice::promote: {
        ContextInstance &c = cfg.ctx(ch.ctx);
        Request r = std::move(c.queue[ch.index]);
        c.queue.erase(c.queue.begin() + static_cast<std::ptrdiff_t>(ch.index));
        record(cfg, "call_promotion", ch.ctx, r.eid, r.method, ch);
        c.queue.insert(c.queue.begin(), std::move(r));
        break;
    }
    case TransitionChoice::lift: lift_intra(cfg, ch.ctx, ch.index); break;
    case TransitionChoice::auto_lock: {
        ContextInstance &c = cfg.ctx(ch.ctx);
        add_placeholder(c, ch.eid, cfg.events.at(ch.eid).am);
        touch(cfg, ch.eid, ch.ctx);
        record(cfg, "auto_lock", ch.ctx, ch.eid, "", ch);
        break;
    }
    case TransitionChoice::commit: commit_event(cfg, ch.eid); break;
    case TransitionChoice::early_start: {
        ContextInstance &c = cfg.ctx(ch.ctx);
        const Request &r = c.queue.at(ch.index);
        EventInfo &e = cfg.events.at(r.eid);
        e.early_started = true;
        for (const auto &a : c.activations)
            if (a.eid != r.eid)
                e.waiting_on.insert(a.eid);
        for (std::size_t k = 0; k < ch.index; ++k)
            e.waiting_on.insert(c.queue[k].eid);
        Request fwd;
        fwd.eid = r.eid;
        fwd.method = r.method;
        fwd.args = r.args;
        fwd.decorator = Decorator::event;
        fwd.am = r.am;
        ContextId target = r.target;
        enqueue(cfg, target, std::move(fwd));
        record(cfg, "early_start", ch.ctx, ch.eid, "forward to " + target.value, ch);
        break;
    }
    }
}

} // namespace

void apply_in_place(GlobalConfig &cfg, const TransitionChoice &choice)
{
    auto enabled = enabled_transitions(cfg);
    if (std::find(enabled.begin(), enabled.end(), choice) == enabled.end())
        throw Error(ErrorKind::stale_choice, choice.str());
    apply_unchecked(cfg, choice);
}

GlobalConfig apply(const GlobalConfig &cfg, const TransitionChoice &choice)
{
    GlobalConfig next = cfg;
    apply_in_place(next, choice);
    return next;
}

void apply_trusted(GlobalConfig &cfg, const TransitionChoice &choice) { apply_unchecked(cfg, choice); }

bool is_quiescent(const GlobalConfig &cfg)
{
    if (!cfg.events.empty() || cfg.next_script < cfg.script->size())
        return false;
    for (const auto &[id, c] : cfg.contexts)
        if (!c.queue.empty())
            return false;
    return true;
}

RunResult run_to_completion(GlobalConfig cfg, std::uint64_t policy_seed, std::size_t max_steps)
{
    std::mt19937_64 rng(policy_seed);
    for (std::size_t i = 0; i < max_steps; ++i) {
        auto enabled = enabled_transitions(cfg);
        if (enabled.empty())
            break;
        apply_unchecked(cfg, enabled[rng() % enabled.size()]);
    }
    RunResult r;
    r.completed = is_quiescent(cfg);
    r.trace = trace_entries(cfg.trace);
    r.final = std::move(cfg);
    return r;
}

namespace {

void put_value_map(std::string &s, const std::map<std::string, Value> &m)
{
    s += '{';
    for (const auto &[k, v] : m) {
        s += k;
        s += '=';
        s += to_string(v);
        s += ',';
    }
    s += '}';
}

void put_args(std::string &s, const std::vector<Value> &args)
{
    s += '(';
    for (const auto &a : args) {
        s += to_string(a);
        s += ',';
    }
    s += ')';
}

} // namespace

std::string config_text(const GlobalConfig &cfg)
{
    std::string s;
    s.reserve(1024);
    s += "G[";
    s += cfg.graph->canonical();
    s += "]S";
    s += std::to_string(cfg.next_script);
    s += " N";
    s += std::to_string(cfg.next_eid);
    for (const auto &[id, c] : cfg.contexts) {
        s += "\nC ";
        s += id.value;
        s += " q[";
        for (const auto &r : c.queue) {
            s += r.lub_marker ? "L" : "R";
            s += std::to_string(r.eid.value);
            s += to_string(r.decorator);
            s += to_string(r.am);
            s += r.method;
            put_args(s, r.args);
            s += r.target.value;
            if (!r.reply_to.empty()) {
                s += '<';
                s += r.reply_to.value;
            }
            s += ';';
        }
        s += "] s";
        put_value_map(s, c.store);
        if (!c.genv.empty()) {
            s += " g";
            put_value_map(s, c.genv);
        }
        s += " a[";
        std::vector<std::string> acts;
        for (const auto &a : c.activations) {
            std::string t = std::to_string(a.eid.value);
            t += to_string(a.am);
            if (a.running) {
                t += to_string(a.decorator);
                t += a.reply_to.value;
                for (const auto &f : a.lenv)
                    put_value_map(t, f);
                t += canonical(a.code);
            } else {
                t += "_";
            }
            acts.push_back(std::move(t));
        }
        for (const auto &t : acts) {
            s += t;
            s += ';';
        }
        s += ']';
    }
    for (const auto &[eid, e] : cfg.events) {
        s += "\nE";
        s += std::to_string(eid.value);
        s += e.target.value;
        s += '.';
        s += e.method;
        put_args(s, e.args);
        s += e.entry_returned ? "r" : "-";
        s += e.marker_admitted ? "m" : "-";
        s += e.early_started ? "e" : "-";
        s += std::to_string(e.commits_before_issue);
        for (const auto &w : e.waiting_on)
            s += "w" + std::to_string(w.value);
    }
    s += "\nF";
    for (const auto &e : cfg.finished) {
        s += std::to_string(e.eid.value);
        s += e.failed ? "x" : "c";
        s += std::to_string(e.commits_before_issue);
        s += ',';
    }
    for (const auto &[eid, p] : cfg.pending_nested) {
        s += "\nP" + std::to_string(eid.value);
        for (const auto &d : p) {
            s += d.target.value + "." + d.method;
            put_args(s, d.args);
        }
    }
    for (const auto &[eid, ts] : cfg.touched) {
        s += "\nT" + std::to_string(eid.value);
        for (const auto &t : ts)
            s += t.value + ",";
    }
    for (const auto &[eid, r] : cfg.snapshots) {
        s += "\nZ" + std::to_string(eid.value);
        for (const auto &[id, st] : r.stores) {
            s += id.value;
            put_value_map(s, st);
        }
    }
    return s;
}

Digest config_digest(const GlobalConfig &cfg) { return digest_of(config_text(cfg)); }

std::string store_text(const GlobalConfig &cfg)
{
    std::string s;
    for (const auto &[id, c] : cfg.contexts) {
        if (c.is_virtual)
            continue;
        s += id.value;
        put_value_map(s, c.store);
        s += '\n';
    }
    s += "G[";
    s += cfg.graph->canonical();
    s += ']';
    return s;
}

Digest store_digest(const GlobalConfig &cfg) { return digest_of(store_text(cfg)); }

std::vector<std::string> check_invariants(const GlobalConfig &cfg)
{
    std::vector<std::string> out;
    for (const auto &[id, c] : cfg.contexts) {
        std::set<EventId> eids;
        bool any_ex = false;
        for (const auto &a : c.activations) {
            eids.insert(a.eid);
            any_ex = any_ex || a.am == AccessMode::ex;
            if (!cfg.find_event(a.eid))
                out.push_back("activation of dead event " + a.eid.str() + " at " + id.value);
        }
        if (any_ex && eids.size() > 1)
            out.push_back("lock shape violated at " + id.value);
        for (const auto &r : c.queue)
            if (!cfg.find_event(r.eid))
                out.push_back("request of dead event " + r.eid.str() + " at " + id.value);
    }
    if (!cfg.options.dominator_sequencing || cfg.options.opt_unshared_start)
        return out;
    for (const auto &[eid, e] : cfg.events) {
        std::vector<ContextId> held;
        for (const auto &[id, c] : cfg.contexts)
            if (c.holds(eid))
                held.push_back(id);
        if (held.empty())
            continue;
        if (!cfg.ctx(e.dominator).holds(eid))
            out.push_back(eid.str() + " active without its dominator " + e.dominator.value);
        // every held context is reachable from the dominator or the target through held contexts
        std::set<ContextId> seen{e.dominator};
        std::vector<ContextId> stack{e.dominator};
        if (cfg.contexts.count(e.target) && cfg.ctx(e.target).holds(eid) && seen.insert(e.target).second)
            stack.push_back(e.target);
        while (!stack.empty()) {
            ContextId cur = stack.back();
            stack.pop_back();
            for (const auto &ch : cfg.graph->children(cur))
                if (cfg.ctx(ch).holds(eid) && seen.insert(ch).second)
                    stack.push_back(ch);
        }
        for (const auto &h : held)
            if (!seen.count(h))
                out.push_back(eid.str() + " holds " + h.value + " off any locked path");
    }
    return out;
}

std::optional<ScriptEntry> replay_entry(const EventInfo &e)
{
    ScriptEntry s;
    s.target = e.target;
    switch (e.kind) {
    case EventKind::migrate: return std::nullopt;
    case EventKind::snapshot: s.kind = ScriptEntry::snapshot; return s;
    default: break;
    }
    s.kind = ScriptEntry::event;
    s.method = e.method;
    s.args = e.args;
    return s;
}

} // namespace aeon
