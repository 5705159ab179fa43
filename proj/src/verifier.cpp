#include "aeon/verifier.hpp"
#include "aeon/error.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace aeon {

std::string DeadlockWitness::str() const
{
    std::string s;
    for (const auto &[ctx, eid] : cycle)
        s += eid.str() + "@" + ctx.value + " -> ";
    if (!cycle.empty())
        s += cycle.front().second.str() + "@" + cycle.front().first.value;
    return s;
}

namespace {

bool conflicts(AccessMode a, AccessMode b) { return a == AccessMode::ex || b == AccessMode::ex; }

AccessMode mode_at(const ContextInstance &c, const EventId &eid)
{
    for (const auto &a : c.activations)
        if (a.eid == eid && a.am == AccessMode::ex)
            return AccessMode::ex;
    return AccessMode::ro;
}

} // namespace

std::optional<DeadlockWitness> detect_deadlock(const GlobalConfig &cfg)
{
    using Node = std::pair<ContextId, EventId>;
    std::map<Node, std::vector<Node>> succ;
    // where each event waits: (ctx, position, am)
    std::map<EventId, std::vector<std::tuple<ContextId, std::size_t, AccessMode>>> waits;
    for (const auto &[id, c] : cfg.contexts)
        for (std::size_t i = 0; i < c.queue.size(); ++i)
            waits[c.queue[i].eid].emplace_back(id, i, c.queue[i].am);
    for (const auto &[id, c] : cfg.contexts) {
        std::set<EventId> here;
        for (const auto &a : c.activations)
            here.insert(a.eid);
        for (const auto &eid : here) {
            Node from{id, eid};
            auto w = waits.find(eid);
            if (w == waits.end())
                continue;
            for (const auto &[wctx, pos, am] : w->second) {
                const ContextInstance &target = cfg.contexts.at(wctx);
                if (target.holds(eid))
                    continue;
                std::set<EventId> blockers;
                for (const auto &a : target.activations)
                    blockers.insert(a.eid);
                for (const auto &b : blockers)
                    if (b != eid && (pos > 0 || conflicts(am, mode_at(target, b))))
                        succ[from].push_back({wctx, b});
            }
        }
    }
    std::map<Node, int> color;
    std::vector<Node> stack;
    std::optional<DeadlockWitness> found;
    std::function<bool(const Node &)> dfs = [&](const Node &n) {
        color[n] = 1;
        stack.push_back(n);
        auto it = succ.find(n);
        if (it != succ.end()) {
            for (const auto &m : it->second) {
                int c = color[m];
                if (c == 1) {
                    auto start = std::find(stack.begin(), stack.end(), m);
                    DeadlockWitness w;
                    w.cycle.assign(start, stack.end());
                    found = std::move(w);
                    return true;
                }
                if (c == 0 && dfs(m))
                    return true;
            }
        }
        stack.pop_back();
        color[n] = 2;
        return false;
    };
    for (const auto &[n, _] : succ)
        if (color[n] == 0 && dfs(n))
            break;
    return found;
}

LinearResult linear_execute(std::shared_ptr<const Program> program, const std::vector<ScriptEntry> &events)
{
    EngineOptions opts;
    opts.linear = true;
    opts.suppress_nested = true;
    opts.record_trace = false;
    GlobalConfig cfg = initial_config(std::move(program), opts, events);
    for (;;) {
        auto enabled = enabled_transitions(cfg);
        if (enabled.empty())
            break;
        apply_trusted(cfg, enabled.front());
    }
    if (!is_quiescent(cfg))
        throw Error(ErrorKind::stuck, "linear execution stuck");
    LinearResult r;
    for (const auto &[id, c] : cfg.contexts) {
        if (c.is_virtual)
            continue;
        std::string s;
        for (const auto &[k, v] : c.store)
            s += k + "=" + to_string(v) + ";";
        r.stores[id] = digest_of(s);
    }
    r.digest = store_digest(cfg);
    r.finished = cfg.finished;
    r.final = std::move(cfg);
    return r;
}

LinearOutcomes linear_outcomes(std::shared_ptr<const Program> program, const std::vector<ScriptEntry> &events,
                               std::size_t max_configs)
{
    EngineOptions opts;
    opts.linear = true;
    opts.suppress_nested = true;
    opts.record_trace = false;
    LinearOutcomes out;
    std::vector<GlobalConfig> stack;
    std::unordered_set<Digest> seen;
    stack.push_back(initial_config(std::move(program), opts, events));
    seen.insert(config_digest(stack.back()));
    while (!stack.empty()) {
        GlobalConfig cfg = std::move(stack.back());
        stack.pop_back();
        auto enabled = enabled_transitions(cfg);
        if (enabled.empty()) {
            if (!is_quiescent(cfg))
                throw Error(ErrorKind::stuck, "linear execution stuck");
            out.digests.insert(store_digest(cfg));
            continue;
        }
        // straight-line runs need no copies
        if (enabled.size() == 1) {
            apply_trusted(cfg, enabled.front());
            stack.push_back(std::move(cfg));
            continue;
        }
        for (const auto &ch : enabled) {
            if (seen.size() >= max_configs) {
                out.complete = false;
                return out;
            }
            GlobalConfig next = cfg;
            apply_trusted(next, ch);
            if (seen.insert(config_digest(next)).second)
                stack.push_back(std::move(next));
        }
    }
    return out;
}

namespace {

std::string order_key(const std::vector<ScriptEntry> &events)
{
    std::string k;
    for (const auto &e : events) {
        k += e.kind == ScriptEntry::snapshot ? "S " : "E ";
        k += e.target.value + "." + e.method + "(";
        for (const auto &a : e.args)
            k += to_string(a) + ",";
        k += ")\n";
    }
    return k;
}

std::vector<ScriptEntry> replay_order(const std::vector<EventInfo> &finished)
{
    std::vector<ScriptEntry> out;
    for (const auto &e : finished)
        if (auto s = replay_entry(e))
            out.push_back(std::move(*s));
    return out;
}

} // namespace

const LinearOutcomes &OracleCache::outcomes(const std::vector<ScriptEntry> &events)
{
    std::string key = order_key(events);
    auto it = cache_.find(key);
    if (it != cache_.end())
        return it->second;
    return cache_.emplace(std::move(key), linear_outcomes(program_, events)).first->second;
}

std::vector<std::string> check_realtime(const std::vector<EventInfo> &history)
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < history.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            // history[j] precedes history[i]; the reverse real-time order is the violation
            const EventInfo &later = history[i];
            const EventInfo &earlier = history[j];
            if (later.commit_tick && *later.commit_tick < earlier.issue_tick)
                out.push_back(later.eid.str() + " committed at " + std::to_string(*later.commit_tick) +
                              " before " + earlier.eid.str() + " was issued at " +
                              std::to_string(earlier.issue_tick) + " but is ordered after it");
        }
    }
    return out;
}

std::optional<Violation> check_serializability(const GlobalConfig &terminal, OracleCache &oracle)
{
    std::vector<EventId> order;
    for (const auto &e : terminal.finished)
        order.push_back(e.eid);
    auto rt = check_realtime(terminal.finished);
    if (!rt.empty()) {
        Violation v;
        v.kind = "realtime";
        v.message = rt.front();
        v.trace = trace_entries(terminal.trace);
        v.commit_order = order;
        return v;
    }
    const LinearOutcomes &lin = oracle.outcomes(replay_order(terminal.finished));
    Digest actual = store_digest(terminal);
    if (lin.digests.count(actual))
        return std::nullopt;
    Violation v;
    v.kind = lin.complete ? "serializability" : "oracle_truncated";
    v.message = lin.complete ? "terminal stores match no linear execution of the commit order"
                             : "terminal stores not found in the truncated linear oracle";
    v.trace = trace_entries(terminal.trace);
    v.commit_order = order;
    if (!lin.digests.empty())
        v.oracle = *lin.digests.begin();
    v.actual = actual;
    return v;
}

ExplorationReport::Verdict ExplorationReport::verdict() const
{
    if (violation_count > 0)
        return violation;
    if (bound_exhausted)
        return inconclusive;
    return pass;
}

int ExplorationReport::exit_code() const
{
    switch (verdict()) {
    case pass: return 0;
    case violation: return 2;
    case inconclusive: return 3;
    }
    return 3;
}

const char *to_string(ExplorationReport::Verdict v)
{
    switch (v) {
    case ExplorationReport::pass: return "PASS";
    case ExplorationReport::violation: return "VIOLATION";
    case ExplorationReport::inconclusive: return "INCONCLUSIVE";
    }
    return "?";
}

ExplorationReport explore(std::shared_ptr<const Program> program, const ExploreOptions &options,
                          std::optional<std::vector<ScriptEntry>> events)
{
    ExplorationReport rep;
    OracleCache oracle(program);
    EngineOptions eo = options.engine;
    eo.record_trace = true;

    struct Item {
        GlobalConfig cfg;
        std::size_t depth;
    };
    std::vector<Item> stack;
    std::unordered_set<Digest> visited;
    std::set<std::vector<std::pair<ContextId, EventId>>> seen_cycles;

    auto add = [&](std::vector<Violation> &list, Violation v) {
        ++rep.violation_count;
        if (list.size() < options.max_reported)
            list.push_back(std::move(v));
    };

    GlobalConfig init = initial_config(program, eo, std::move(events));
    visited.insert(config_digest(init));
    stack.push_back({std::move(init), 0});
    while (!stack.empty()) {
        Item item = std::move(stack.back());
        stack.pop_back();
        const GlobalConfig &cfg = item.cfg;
        ++rep.configs_visited;
        rep.max_depth_seen = std::max(rep.max_depth_seen, item.depth);
        if (options.on_config)
            options.on_config(cfg);

        if (auto w = detect_deadlock(cfg)) {
            auto key = w->cycle;
            std::rotate(key.begin(), std::min_element(key.begin(), key.end()), key.end());
            if (seen_cycles.insert(key).second) {
                ++rep.violation_count;
                if (rep.deadlocks.size() < options.max_reported)
                    rep.deadlocks.emplace_back(*w, trace_entries(cfg.trace));
            }
        }
        if (options.invariants) {
            std::vector<std::string> bad = check_invariants(cfg);
            if (options.invariant) {
                auto more = options.invariant(cfg);
                bad.insert(bad.end(), more.begin(), more.end());
            }
            for (auto &m : bad)
                add(rep.invariant_violations, Violation{"invariant", std::move(m), trace_entries(cfg.trace), {}, {}, {}});
        }

        auto enabled = enabled_transitions(cfg);
        if (enabled.empty()) {
            ++rep.terminal_configs;
            if (!is_quiescent(cfg)) {
                add(rep.stuck, Violation{"stuck", "live work but no enabled transition", trace_entries(cfg.trace), {},
                                         {}, {}});
                continue;
            }
            rep.terminal_states.insert(store_digest(cfg));
            if (options.serializability) {
                if (auto v = check_serializability(cfg, oracle)) {
                    if (v->kind == "realtime") {
                        add(rep.realtime_violations, std::move(*v));
                    } else if (v->kind == "oracle_truncated") {
                        ++rep.oracle_truncated;
                        rep.bound_exhausted = true;
                    } else
                        add(rep.serializability_violations, std::move(*v));
                }
            }
            continue;
        }
        if (item.depth >= options.max_depth) {
            rep.bound_exhausted = true;
            continue;
        }
        std::vector<Item> children;
        for (const auto &ch : enabled) {
            if (visited.size() >= options.max_configs) {
                rep.bound_exhausted = true;
                break;
            }
            GlobalConfig next = cfg;
            apply_trusted(next, ch);
            ++rep.transitions;
            if (visited.insert(config_digest(next)).second)
                children.push_back({std::move(next), item.depth + 1});
        }
        // first enabled choice explored first
        for (auto it = children.rbegin(); it != children.rend(); ++it)
            stack.push_back(std::move(*it));
    }
    return rep;
}

namespace {

std::string trace_text(const std::vector<TraceEntry> &trace)
{
    std::string s;
    for (const auto &t : trace)
        s += "    " + std::to_string(t.step) + " " + t.rule + " " + t.ctx.value + " " + t.eid.str() + " " + t.detail +
             "\n";
    return s;
}

void violation_text(std::ostringstream &os, const Violation &v)
{
    os << "  [" << v.kind << "] " << v.message << "\n";
    if (!v.commit_order.empty()) {
        os << "    commit order:";
        for (const auto &e : v.commit_order)
            os << " " << e.str();
        os << "\n";
    }
    if (v.oracle)
        os << "    oracle " << v.oracle->hex() << " actual " << (v.actual ? v.actual->hex() : "-") << "\n";
    os << trace_text(v.trace);
}

nlohmann::json violation_json(const Violation &v)
{
    nlohmann::json j{{"kind", v.kind}, {"message", v.message}, {"trace_length", v.trace.size()}};
    nlohmann::json order = nlohmann::json::array();
    for (const auto &e : v.commit_order)
        order.push_back(e.str());
    j["commit_order"] = order;
    if (v.oracle)
        j["oracle"] = v.oracle->hex();
    if (v.actual)
        j["actual"] = v.actual->hex();
    return j;
}

} // namespace

std::string report_text(const ExplorationReport &r)
{
    std::ostringstream os;
    os << "verdict: " << to_string(r.verdict()) << "\n";
    os << "configs visited: " << r.configs_visited << "\n";
    os << "transitions: " << r.transitions << "\n";
    os << "terminal configs: " << r.terminal_configs << "\n";
    os << "distinct terminal stores: " << r.terminal_states.size() << "\n";
    os << "max depth: " << r.max_depth_seen << "\n";
    os << "bound exhausted: " << (r.bound_exhausted ? "yes" : "no") << "\n";
    if (r.oracle_truncated)
        os << "undecided terminals (oracle bound): " << r.oracle_truncated << "\n";
    os << "deadlocks: " << r.deadlocks.size() << "\n";
    for (const auto &[w, trace] : r.deadlocks)
        os << "  cycle " << w.str() << "\n" << trace_text(trace);
    os << "stuck states: " << r.stuck.size() << "\n";
    for (const auto &v : r.stuck)
        violation_text(os, v);
    os << "serializability violations: " << r.serializability_violations.size() << "\n";
    for (const auto &v : r.serializability_violations)
        violation_text(os, v);
    os << "realtime violations: " << r.realtime_violations.size() << "\n";
    for (const auto &v : r.realtime_violations)
        violation_text(os, v);
    os << "invariant violations: " << r.invariant_violations.size() << "\n";
    for (const auto &v : r.invariant_violations)
        violation_text(os, v);
    return os.str();
}

nlohmann::json report_json(const ExplorationReport &r)
{
    nlohmann::json j;
    j["verdict"] = to_string(r.verdict());
    j["configs_visited"] = r.configs_visited;
    j["transitions"] = r.transitions;
    j["terminal_configs"] = r.terminal_configs;
    j["max_depth"] = r.max_depth_seen;
    j["bound_exhausted"] = r.bound_exhausted;
    j["oracle_truncated"] = r.oracle_truncated;
    nlohmann::json ts = nlohmann::json::array();
    for (const auto &d : r.terminal_states)
        ts.push_back(d.hex());
    j["terminal_states"] = ts;
    nlohmann::json dl = nlohmann::json::array();
    for (const auto &[w, trace] : r.deadlocks) {
        nlohmann::json cyc = nlohmann::json::array();
        for (const auto &[c, e] : w.cycle)
            cyc.push_back({{"ctx", c.value}, {"eid", e.str()}});
        dl.push_back({{"cycle", cyc}, {"trace_length", trace.size()}});
    }
    j["deadlocks"] = dl;
    auto list = [](const std::vector<Violation> &vs) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto &v : vs)
            a.push_back(violation_json(v));
        return a;
    };
    j["stuck"] = list(r.stuck);
    j["serializability_violations"] = list(r.serializability_violations);
    j["realtime_violations"] = list(r.realtime_violations);
    j["invariant_violations"] = list(r.invariant_violations);
    return j;
}

const char *to_string(CommutativityResult::Status s)
{
    switch (s) {
    case CommutativityResult::pass: return "PASS";
    case CommutativityResult::counterexample: return "counterexample";
    case CommutativityResult::not_independent: return "not-independent";
    case CommutativityResult::inconclusive: return "inconclusive";
    }
    return "?";
}

CommutativityResult check_commutativity(std::shared_ptr<const Program> program, const ScriptEntry &e0,
                                        const ScriptEntry &e1, std::size_t max_configs)
{
    CommutativityResult res;
    ExploreOptions opts;
    opts.max_configs = max_configs;
    opts.max_depth = 1'000'000;
    opts.engine.track_touched = true;
    opts.serializability = false;
    bool overlap = false;
    std::string overlap_ctx;
    opts.on_config = [&](const GlobalConfig &cfg) {
        if (overlap)
            return;
        // nested events count toward the client event that created them
        std::map<EventId, const EventInfo *> info;
        for (const auto &e : cfg.finished)
            info[e.eid] = &e;
        for (const auto &[id, e] : cfg.events)
            info[id] = &e;
        std::vector<EventId> clients;
        for (const auto &[id, e] : info)
            if (e->kind == EventKind::client)
                clients.push_back(id);
        auto root = [&](EventId id) {
            for (auto it = info.find(id); it != info.end() && it->second->parent; it = info.find(id))
                id = *it->second->parent;
            return id;
        };
        std::set<ContextId> side[2];
        for (const auto &[id, ctxs] : cfg.touched) {
            EventId r = root(id);
            for (std::size_t k = 0; k < clients.size() && k < 2; ++k)
                if (clients[k] == r)
                    side[k].insert(ctxs.begin(), ctxs.end());
        }
        for (const auto &c : side[0])
            if (side[1].count(c)) {
                overlap = true;
                overlap_ctx = c.value;
                return;
            }
    };
    ExplorationReport rep = explore(program, opts, std::vector<ScriptEntry>{e0, e1});
    res.terminal_states = rep.terminal_states;
    bool both_ro = false;
    if (e0.kind == ScriptEntry::event && e1.kind == ScriptEntry::event) {
        const OwnershipGraph g = program->build_graph();
        const MethodDef *m0 = g.contains(e0.target) ? program->find_method(g.class_of(e0.target), e0.method) : nullptr;
        const MethodDef *m1 = g.contains(e1.target) ? program->find_method(g.class_of(e1.target), e1.method) : nullptr;
        both_ro = m0 && m1 && m0->access_mode == AccessMode::ro && m1->access_mode == AccessMode::ro;
    }
    if (overlap && !both_ro) {
        res.status = CommutativityResult::not_independent;
        res.message = "both events transition on " + overlap_ctx;
        return res;
    }
    if (rep.violation_count > 0) {
        res.status = CommutativityResult::counterexample;
        res.message = report_text(rep);
        return res;
    }
    if (rep.bound_exhausted) {
        res.status = CommutativityResult::inconclusive;
        res.message = "bound exhausted after " + std::to_string(rep.configs_visited) + " configs";
        return res;
    }
    if (rep.terminal_states.size() != 1) {
        res.status = CommutativityResult::counterexample;
        res.message = std::to_string(rep.terminal_states.size()) + " distinct terminal stores";
        return res;
    }
    res.status = CommutativityResult::pass;
    return res;
}

} // namespace aeon
