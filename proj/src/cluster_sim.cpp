#include "aeon/cluster_sim.hpp"
#include "aeon/error.hpp"
#include "aeon/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace aeon {

Tick LatencyModel::link(ServerId a, ServerId b) const
{
    if (a == b)
        return 0;
    auto it = links.find({std::min(a, b), std::max(a, b)});
    return it != links.end() ? it->second : base;
}

double RateProfile::at(Tick t) const
{
    if (shape == constant)
        return rate;
    if (t < start || period <= 0)
        return low;
    double phase = static_cast<double>((t - start) % period) / static_cast<double>(period);
    double up = phase < 0.5 ? phase * 2 : (1 - phase) * 2;
    return low + (high - low) * up;
}

bool RateProfile::rising(Tick t) const
{
    if (shape == constant || t < start || period <= 0)
        return false;
    return (t - start) % period < period / 2;
}

const char *to_string(MigrationPhase p)
{
    switch (p) {
    case MigrationPhase::prepare: return "I-prepare";
    case MigrationPhase::stop: return "II-stop";
    case MigrationPhase::remap: return "III-remap";
    case MigrationPhase::transfer: return "IV-transfer";
    case MigrationPhase::done: return "V-done";
    }
    return "?";
}

const char *to_string(DeliveryPlan::Kind k)
{
    switch (k) {
    case DeliveryPlan::direct: return "direct";
    case DeliveryPlan::forward: return "forward";
    case DeliveryPlan::emanager: return "emanager";
    case DeliveryPlan::reject: return "reject";
    case DeliveryPlan::defer: return "defer";
    }
    return "?";
}

ClusterSim::ClusterSim(const Scenario &scenario) : sc_(scenario), rng_(scenario.seed)
{
    if (!sc_.program)
        throw Error(ErrorKind::bad_input, "scenario has no program");
    EngineOptions eo;
    eo.dominator_sequencing = sc_.dominator_sequencing;
    eo.record_trace = false;
    cfg_ = initial_config(sc_.program, eo, std::vector<ScriptEntry>{});
    for (int i = 0; i < std::max(1, sc_.servers); ++i) {
        ServerState s;
        s.id = i;
        servers_.emplace(i, std::move(s));
    }
    place_initial();
    for (auto &[id, s] : servers_)
        s.cache = map_;

    for (const auto &t : sc_.workload.targets) {
        std::vector<ContextId> ids;
        if (t.ctx) {
            if (!cfg_.graph->contains(*t.ctx) || cfg_.graph->is_virtual(*t.ctx))
                throw Error(ErrorKind::unknown_context, t.ctx->value);
            ids.push_back(*t.ctx);
        } else {
            for (const auto &n : cfg_.graph->nodes())
                if (!cfg_.graph->is_virtual(n) && cfg_.graph->class_of(n) == t.class_name)
                    ids.push_back(n);
            if (ids.empty())
                throw Error(ErrorKind::unknown_class, "no instances of " + t.class_name);
        }
        for (const auto &id : ids) {
            targets_.emplace_back(id, t.weight);
            target_calls_.emplace_back(t.method, t.args);
        }
    }
    if (sc_.workload.kind == WorkloadSpec::closed)
        for (int c = 0; c < sc_.workload.clients; ++c)
            closed_next_[c] = 0;
}

void ClusterSim::place_initial()
{
    const OwnershipGraph &g = *cfg_.graph;
    // parents before children, ties by id
    std::map<ContextId, int> indeg;
    std::vector<ContextId> order;
    for (const auto &n : g.nodes())
        if (!g.is_virtual(n))
            indeg[n] = 0;
    for (const auto &[n, _] : indeg)
        for (const auto &c : g.children(n))
            if (indeg.count(c))
                ++indeg[c];
    std::set<ContextId> ready;
    for (const auto &[n, d] : indeg)
        if (d == 0)
            ready.insert(n);
    while (!ready.empty()) {
        ContextId n = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(n);
        for (const auto &c : g.children(n))
            if (indeg.count(c) && --indeg[c] == 0)
                ready.insert(c);
    }
    int rr = 0;
    int n_servers = static_cast<int>(servers_.size());
    for (const auto &n : order) {
        ServerId s;
        auto fx = sc_.placement.fixed.find(n);
        if (fx != sc_.placement.fixed.end()) {
            s = fx->second;
            if (!servers_.count(s))
                throw Error(ErrorKind::bad_input, "placement of " + n.value + " on missing server");
        } else {
            ContextId parent;
            bool has_parent = false;
            for (const auto &p : g.parents(n))
                if (!g.is_virtual(p) && map_.count(p)) {
                    parent = p;
                    has_parent = true;
                    break;
                }
            bool spread = sc_.placement.mode == PlacementSpec::round_robin || !has_parent ||
                          sc_.placement.spread.count(g.class_of(n));
            s = spread ? rr++ % n_servers : map_.at(parent);
        }
        map_[n] = s;
        servers_.at(s).hosted.insert(n);
    }
}

int ClusterSim::server_count() const
{
    int n = 0;
    for (const auto &[id, s] : servers_)
        n += s.alive ? 1 : 0;
    return n;
}

ServerId ClusterSim::host(const ContextId &ctx) const
{
    for (const auto &[id, s] : servers_)
        if (s.hosted.count(ctx))
            return id;
    // virtual contexts sit with their lowest member
    const OwnershipGraph &g = *cfg_.graph;
    if (g.contains(ctx))
        for (const auto &c : g.children(ctx))
            if (!g.is_virtual(c))
                return host(c);
    for (const auto &[id, s] : servers_)
        if (s.alive)
            return id;
    return 0;
}

Tick ClusterSim::net(ServerId a, ServerId b)
{
    if (a == b)
        return 0;
    Tick t = sc_.latency.link(a, b);
    if (sc_.latency.jitter > 0)
        t += static_cast<Tick>(rng_() % static_cast<std::uint64_t>(sc_.latency.jitter + 1));
    return t;
}

void ClusterSim::send(Tick at, Message m) { inbox_.emplace(std::make_pair(std::max(at, now_), msg_seq_++), std::move(m)); }

ServerId ClusterSim::add_server()
{
    ServerId id = servers_.empty() ? 0 : servers_.rbegin()->first + 1;
    ServerState s;
    s.id = id;
    s.cache = map_;
    servers_.emplace(id, std::move(s));
    return id;
}

DeliveryPlan ClusterSim::route_event(int client, const ContextId &target) const
{
    if (!map_.count(target))
        throw Error(ErrorKind::unknown_context, target.value);
    DeliveryPlan plan;
    ServerId s = map_.at(target);
    auto cc = client_cache_.find(client);
    if (cc != client_cache_.end()) {
        auto it = cc->second.find(target);
        if (it != cc->second.end())
            s = it->second;
    }
    auto mig = in_flight_.find(target);
    for (int hops = 0;; ++hops) {
        plan.path.push_back(s);
        const ServerState *sv = servers_.count(s) ? &servers_.at(s) : nullptr;
        if (!sv || !sv->alive) {
            plan.kind = DeliveryPlan::reject;
            return plan;
        }
        if (mig != in_flight_.end() && mig->second.dst == s && mig->second.prepared >= 0) {
            if (hops == 0)
                plan.kind = DeliveryPlan::defer;
            return plan;
        }
        if (sv->hosted.count(target)) {
            if (mig != in_flight_.end() && mig->second.src == s && mig->second.src_learned >= 0) {
                // forwarded on to the destination, where it is deferred
                plan.kind = DeliveryPlan::forward;
                plan.notify_client = true;
                s = mig->second.dst;
                continue;
            }
            if (mig != in_flight_.end() && mig->second.src == s && mig->second.stopped >= 0) {
                plan.kind = DeliveryPlan::reject;
                return plan;
            }
            if (hops == 0)
                plan.kind = DeliveryPlan::direct;
            return plan;
        }
        auto it = sv->cache.find(target);
        if (it != sv->cache.end() && it->second != s && hops < 2 && servers_.count(it->second) &&
            servers_.at(it->second).alive) {
            plan.kind = plan.kind == DeliveryPlan::emanager ? plan.kind : DeliveryPlan::forward;
            plan.notify_client = true;
            s = it->second;
            continue;
        }
        plan.kind = DeliveryPlan::emanager;
        plan.notify_client = true;
        s = map_.at(target);
        if (std::find(plan.path.begin(), plan.path.end(), s) != plan.path.end() && !servers_.at(s).hosted.count(target)) {
            // the owner is mid-transfer; it defers or rejects
            plan.path.push_back(s);
            return plan;
        }
    }
}

std::uint64_t ClusterSim::submit(int client, const ContextId &target, const std::string &method,
                                 const std::vector<Value> &args)
{
    if (!map_.count(target))
        throw Error(ErrorKind::unknown_context, target.value);
    ClientRequest r;
    r.id = next_req_++;
    r.client = client;
    r.target = target;
    r.method = method;
    r.args = args;
    r.issued = now_;
    auto &cache = client_cache_[client];
    if (!cache.count(target))
        cache[target] = map_.at(target);
    ServerId s = cache.at(target);
    std::uint64_t id = r.id;
    requests_.emplace(id, std::move(r));
    ++issued_count_;
    if (static_cast<std::size_t>(now_) >= issued_series_.size())
        issued_series_.resize(static_cast<std::size_t>(now_) + 1, 0);
    ++issued_series_[static_cast<std::size_t>(now_)];
    send(now_ + sc_.latency.client, Message{Message::arrive, id, s, target});
    return id;
}

void ClusterSim::arrive(std::uint64_t req_id, ServerId s)
{
    ClientRequest &r = requests_.at(req_id);
    auto sit = servers_.find(s);
    if (sit == servers_.end() || !sit->second.alive) {
        // connection refused: the client asks the eManager again
        ++retries_;
        ++r.retries;
        send(now_ + 1, Message{Message::retry, req_id, s, r.target});
        return;
    }
    ServerState &sv = sit->second;
    auto mig = in_flight_.find(r.target);
    if (mig != in_flight_.end() && mig->second.dst == s && mig->second.prepared >= 0) {
        r.status = ClientRequest::deferred;
        mig->second.deferred.push_back(req_id);
        return;
    }
    if (sv.hosted.count(r.target)) {
        if (mig != in_flight_.end() && mig->second.src == s) {
            if (mig->second.src_learned >= 0) {
                ++forwarded_;
                ++r.forwards;
                client_cache_[r.client][r.target] = mig->second.dst;
                send(now_ + net(s, mig->second.dst), Message{Message::arrive, req_id, mig->second.dst, r.target});
                return;
            }
            if (mig->second.stopped >= 0) {
                ++rejected_;
                ++mig->second.rejected;
                ++retries_;
                ++r.retries;
                send(now_ + 1, Message{Message::retry, req_id, s, r.target});
                return;
            }
        }
        accept(req_id, s);
        return;
    }
    ++r.hops;
    auto it = sv.cache.find(r.target);
    if (it != sv.cache.end() && it->second != s && r.hops < 3 && servers_.count(it->second) &&
        servers_.at(it->second).alive) {
        ++forwarded_;
        ++r.forwards;
        client_cache_[r.client][r.target] = it->second;
        send(now_ + net(s, it->second), Message{Message::arrive, req_id, it->second, r.target});
        return;
    }
    ++em_lookups_;
    ++r.em_lookups;
    ServerId owner = map_.at(r.target);
    sv.cache[r.target] = owner;
    client_cache_[r.client][r.target] = owner;
    r.hops = 0;
    send(now_ + 2 * sc_.latency.em + net(s, owner), Message{Message::arrive, req_id, owner, r.target});
}

void ClusterSim::accept(std::uint64_t req_id, ServerId s)
{
    ClientRequest &r = requests_.at(req_id);
    r.accepted_by = s;
    r.accepted = now_;
    cfg_.clock = std::max(cfg_.clock, static_cast<std::uint64_t>(now_) * 1'000'000);
    std::uint64_t seq_before = cfg_.next_seq;
    try {
        EventId eid = dispatch_event(cfg_, r.target, r.method, r.args);
        r.eid = eid;
        r.status = ClientRequest::running;
        eid_to_req_[eid] = req_id;
    } catch (const Error &err) {
        r.status = ClientRequest::failed;
        r.done = now_;
        ++r.completions;
        if (sc_.workload.kind == WorkloadSpec::closed)
            closed_next_[r.client] = now_ + sc_.workload.think;
        return;
    }
    after_apply(seq_before, s);
}

void ClusterSim::after_apply(std::uint64_t seq_before, ServerId origin)
{
    if (cfg_.next_seq == seq_before)
        return;
    for (const auto &[id, c] : cfg_.contexts) {
        for (auto it = c.queue.rbegin(); it != c.queue.rend() && it->seq >= seq_before; ++it) {
            ServerId dst = host(id);
            if (dst != origin)
                available_at_[it->seq] = now_ + net(origin, dst);
        }
    }
}

void ClusterSim::migrate(const ContextId &ctx, ServerId dst)
{
    if (in_flight_.count(ctx))
        throw Error(ErrorKind::migration_in_flight, ctx.value);
    if (!map_.count(ctx))
        throw Error(ErrorKind::unknown_context, ctx.value);
    if (!servers_.count(dst) || !servers_.at(dst).alive)
        throw Error(ErrorKind::bad_input, "no server " + std::to_string(dst));
    ServerId src = host(ctx);
    if (src == dst)
        throw Error(ErrorKind::bad_input, ctx.value + " already on server " + std::to_string(dst));
    MigrationRecord m;
    m.ctx = ctx;
    m.src = src;
    m.dst = dst;
    m.started = now_;
    in_flight_.emplace(ctx, std::move(m));
    last_moved_[ctx] = now_;
    send(now_ + sc_.latency.em, Message{Message::mig_prepare, 0, dst, ctx});
}

void ClusterSim::start_transfer(MigrationRecord &m)
{
    m.drained = now_;
    frozen_.insert(m.ctx);
    std::int64_t bw = std::max<std::int64_t>(1, sc_.bandwidth);
    m.transfer_ticks = (sc_.state_bytes + bw - 1) / bw;
    send(now_ + m.transfer_ticks + net(m.src, m.dst), Message{Message::mig_done, 0, m.dst, m.ctx});
}

void ClusterSim::deliver(const Message &msg)
{
    switch (msg.kind) {
    case Message::arrive: arrive(msg.req, msg.server); break;
    case Message::retry: {
        ClientRequest &r = requests_.at(msg.req);
        ++r.em_lookups;
        ++em_lookups_;
        ServerId owner = map_.at(r.target);
        client_cache_[r.client][r.target] = owner;
        send(now_ + sc_.latency.em + sc_.latency.client, Message{Message::arrive, msg.req, owner, r.target});
        break;
    }
    case Message::mig_prepare: {
        MigrationRecord &m = in_flight_.at(msg.ctx);
        m.prepared = now_;
        m.phase = MigrationPhase::prepare;
        // ack reaches the eManager, which tells the source to stop
        send(now_ + 2 * sc_.latency.em, Message{Message::mig_stop, 0, m.src, msg.ctx});
        break;
    }
    case Message::mig_stop: {
        MigrationRecord &m = in_flight_.at(msg.ctx);
        m.stopped = now_;
        m.phase = MigrationPhase::stop;
        send(now_ + sc_.latency.em + sc_.delta, Message{Message::mig_flip, 0, -1, msg.ctx});
        break;
    }
    case Message::mig_flip: {
        MigrationRecord &m = in_flight_.at(msg.ctx);
        m.flipped = now_;
        m.phase = MigrationPhase::remap;
        map_[m.ctx] = m.dst;
        servers_.at(m.dst).cache[m.ctx] = m.dst;
        send(now_ + sc_.latency.em, Message{Message::mig_src_learns, 0, m.src, msg.ctx});
        break;
    }
    case Message::mig_src_learns: {
        MigrationRecord &m = in_flight_.at(msg.ctx);
        m.src_learned = now_;
        m.phase = MigrationPhase::transfer;
        servers_.at(m.src).cache[m.ctx] = m.dst;
        cfg_.clock = std::max(cfg_.clock, static_cast<std::uint64_t>(now_) * 1'000'000);
        std::uint64_t seq_before = cfg_.next_seq;
        m.migrate_eid = dispatch_system_event(cfg_, m.ctx);
        after_apply(seq_before, m.src);
        break;
    }
    case Message::mig_done: {
        MigrationRecord m = std::move(in_flight_.at(msg.ctx));
        in_flight_.erase(msg.ctx);
        servers_.at(m.src).hosted.erase(m.ctx);
        servers_.at(m.src).active_window.erase(m.ctx);
        servers_.at(m.dst).hosted.insert(m.ctx);
        frozen_.erase(m.ctx);
        m.done = now_;
        m.phase = MigrationPhase::done;
        for (auto id : m.deferred)
            accept(id, m.dst);
        log_.push_back(std::move(m));
        break;
    }
    }
}

void ClusterSim::generate_workload()
{
    const WorkloadSpec &w = sc_.workload;
    double rate = w.kind == WorkloadSpec::open ? w.profile.at(now_) : 0.0;
    if (static_cast<std::size_t>(now_) >= rate_series_.size())
        rate_series_.resize(static_cast<std::size_t>(now_) + 1, 0.0);
    rate_series_[static_cast<std::size_t>(now_)] = rate;
    if (targets_.empty())
        return;
    if (w.stop_at >= 0 && now_ >= w.stop_at)
        return;
    auto budget_left = [&] { return w.max_events < 0 || issued_count_ < w.max_events; };
    double total_weight = 0;
    for (const auto &t : targets_)
        total_weight += t.second;
    auto pick = [&]() -> std::size_t {
        double x = std::uniform_real_distribution<double>(0, total_weight)(rng_);
        for (std::size_t i = 0; i < targets_.size(); ++i) {
            x -= targets_[i].second;
            if (x < 0)
                return i;
        }
        return targets_.size() - 1;
    };
    if (w.kind == WorkloadSpec::open) {
        std::int64_t n = rate > 0 ? std::poisson_distribution<std::int64_t>(rate)(rng_) : 0;
        for (std::int64_t i = 0; i < n && budget_left(); ++i) {
            std::size_t t = pick();
            int client = static_cast<int>(rng_() % static_cast<std::uint64_t>(std::max(1, w.clients)));
            submit(client, targets_[t].first, target_calls_[t].first, target_calls_[t].second);
        }
        return;
    }
    std::vector<int> due;
    for (const auto &[c, t] : closed_next_)
        if (t <= now_)
            due.push_back(c);
    for (int c : due) {
        if (!budget_left())
            return;
        closed_next_.erase(c);
        std::size_t t = pick();
        submit(c, targets_[t].first, target_calls_[t].first, target_calls_[t].second);
    }
}

bool ClusterSim::choice_allowed(const TransitionChoice &ch, std::map<ServerId, int> &budget)
{
    if (ch.kind == TransitionChoice::commit)
        return true;
    if (frozen_.count(ch.ctx))
        return false;
    const ContextInstance &c = cfg_.ctx(ch.ctx);
    auto available = [&](const Request &r) {
        auto it = available_at_.find(r.seq);
        if (it == available_at_.end())
            return true;
        if (it->second > now_)
            return false;
        available_at_.erase(it);
        return true;
    };
    switch (ch.kind) {
    case TransitionChoice::activate:
        if (c.queue.empty() || c.queue.front().eid != ch.eid || !head_admissible(cfg_, ch.ctx))
            return false;
        return available(c.queue.front());
    case TransitionChoice::promote:
        if (ch.index >= c.queue.size() || c.queue[ch.index].eid != ch.eid || !c.holds(ch.eid))
            return false;
        for (std::size_t k = 0; k < ch.index; ++k)
            if (c.queue[k].eid == ch.eid)
                return false;
        return available(c.queue[ch.index]);
    case TransitionChoice::lift: {
        if (ch.index >= c.activations.size())
            return false;
        const Activation &a = c.activations[ch.index];
        if (!a.running || a.eid != ch.eid || head_blocked(a.code))
            return false;
        auto ra = resume_at_.find({ch.ctx, ch.eid});
        if (ra != resume_at_.end()) {
            if (ra->second > now_)
                return false;
            resume_at_.erase(ra);
        }
        int &b = budget[host(ch.ctx)];
        if (b <= 0)
            return false;
        --b;
        return true;
    }
    case TransitionChoice::auto_lock: {
        const EventInfo *e = cfg_.find_event(ch.eid);
        if (!e || c.holds(ch.eid))
            return false;
        return e->am == AccessMode::ex ? c.activations.empty() : !c.has_ex();
    }
    default: return false;
    }
}

void ClusterSim::harvest_finished()
{
    while (finished_seen_ < cfg_.finished.size()) {
        const EventInfo &e = cfg_.finished[finished_seen_++];
        if (e.kind == EventKind::migrate) {
            for (auto &[ctx, m] : in_flight_)
                if (m.migrate_eid && *m.migrate_eid == e.eid)
                    start_transfer(m);
            continue;
        }
        auto it = eid_to_req_.find(e.eid);
        if (it == eid_to_req_.end())
            continue;
        ClientRequest &r = requests_.at(it->second);
        ++r.completions;
        r.status = e.failed ? ClientRequest::failed : ClientRequest::completed;
        r.done = now_;
        if (static_cast<std::size_t>(now_) >= completed_series_.size())
            completed_series_.resize(static_cast<std::size_t>(now_) + 1, 0);
        if (!e.failed)
            ++completed_series_[static_cast<std::size_t>(now_)];
        if (sc_.workload.kind == WorkloadSpec::closed)
            closed_next_[r.client] = now_ + sc_.workload.think;
    }
}

void ClusterSim::schedule_engine()
{
    std::map<ServerId, int> budget;
    for (const auto &[id, s] : servers_)
        if (s.alive)
            budget[id] = sc_.capacity;
    cfg_.clock = std::max(cfg_.clock, static_cast<std::uint64_t>(now_) * 1'000'000);
    for (int round = 0; round < 100'000; ++round) {
        auto enabled = enabled_transitions(cfg_);
        bool progress = false;
        bool disrupted = false;
        std::set<ContextId> used;
        std::vector<TransitionChoice> commits;
        for (const auto &ch : enabled) {
            if (ch.kind == TransitionChoice::commit) {
                commits.push_back(ch);
                continue;
            }
            if (used.count(ch.ctx) || !choice_allowed(ch, budget))
                continue;
            used.insert(ch.ctx);
            ServerId origin = host(ch.ctx);
            std::uint64_t seq_before = cfg_.next_seq;
            std::size_t finished_before = cfg_.finished.size();
            auto graph_before = cfg_.graph;
            std::vector<ContextId> waiting;
            if (ch.kind == TransitionChoice::lift) {
                for (const auto &[id, c] : cfg_.contexts)
                    for (const auto &a : c.activations)
                        if (a.eid == ch.eid && a.running && a.code) {
                            auto w = std::get_if<Stmt::Waiting>(&a.code->head->node);
                            if (w && w->callee == ch.ctx)
                                waiting.push_back(id);
                        }
                ServerState &sv = servers_.at(origin);
                ++sv.work_window;
                ++sv.work_total;
                if (sv.hosted.count(ch.ctx))
                    ++sv.active_window[ch.ctx];
            }
            apply_trusted(cfg_, ch);
            progress = true;
            after_apply(seq_before, origin);
            for (const auto &w : waiting) {
                const ContextInstance &c = cfg_.ctx(w);
                bool still = false;
                for (const auto &a : c.activations)
                    if (a.eid == ch.eid && a.running && a.code && std::holds_alternative<Stmt::Waiting>(a.code->head->node))
                        still = true;
                ServerId wh = host(w);
                if (!still && wh != origin)
                    resume_at_[{w, ch.eid}] = now_ + net(origin, wh);
            }
            if (cfg_.finished.size() != finished_before || cfg_.graph != graph_before) {
                harvest_finished();
                disrupted = true;
                break;
            }
        }
        if (!disrupted) {
            for (const auto &ch : commits) {
                if (!commit_eligible(cfg_, ch.eid))
                    continue;
                apply_trusted(cfg_, ch);
                progress = true;
                harvest_finished();
            }
        }
        if (!progress)
            break;
    }
}

void ClusterSim::step()
{
    for (const auto &m : sc_.migrations)
        if (m.at == now_)
            migrate(m.ctx, m.to);
    generate_workload();
    while (!inbox_.empty() && inbox_.begin()->first.first <= now_) {
        Message m = inbox_.begin()->second;
        inbox_.erase(inbox_.begin());
        deliver(m);
    }
    schedule_engine();
    harvest_finished();
    if (sc_.policy.kind != PolicySpec::none && sc_.policy.window > 0 && now_ > 0 && now_ % sc_.policy.window == 0)
        policy_step();
    // drained servers leave the pool
    for (auto &[id, s] : servers_) {
        if (!s.alive || !s.draining || !s.hosted.empty())
            continue;
        bool busy = false;
        for (const auto &[ctx, m] : in_flight_)
            busy = busy || m.src == id || m.dst == id;
        if (!busy)
            s.alive = false;
    }
    auto idx = static_cast<std::size_t>(now_);
    if (idx >= completed_series_.size())
        completed_series_.resize(idx + 1, 0);
    if (idx >= issued_series_.size())
        issued_series_.resize(idx + 1, 0);
    if (idx >= server_series_.size())
        server_series_.resize(idx + 1, 0);
    server_series_[idx] = server_count();
    ++now_;
}

void ClusterSim::run_until(Tick t)
{
    while (now_ < t)
        step();
}

bool ClusterSim::quiescent() const
{
    if (!inbox_.empty() || !in_flight_.empty() || !is_quiescent(cfg_))
        return false;
    for (const auto &[id, r] : requests_)
        if (r.status != ClientRequest::completed && r.status != ClientRequest::failed)
            return false;
    return true;
}

SnapshotRecord ClusterSim::snapshot(const ContextId &ctx, Tick max_ticks)
{
    if (!map_.count(ctx))
        throw Error(ErrorKind::unknown_context, ctx.value);
    cfg_.clock = std::max(cfg_.clock, static_cast<std::uint64_t>(now_) * 1'000'000);
    std::uint64_t seq_before = cfg_.next_seq;
    EventId eid = dispatch_snapshot(cfg_, ctx);
    after_apply(seq_before, host(ctx));
    Tick limit = now_ + max_ticks;
    while (now_ < limit) {
        auto it = cfg_.snapshots.find(eid);
        bool done = !cfg_.find_event(eid);
        if (done) {
            if (it == cfg_.snapshots.end())
                throw Error(ErrorKind::stuck, "snapshot of " + ctx.value + " failed");
            return it->second;
        }
        step();
    }
    throw Error(ErrorKind::stuck, "snapshot of " + ctx.value + " did not finish");
}

MetricsReport ClusterSim::metrics() const
{
    MetricsReport m;
    m.scenario = sc_.name;
    m.seed = sc_.seed;
    m.until = now_;
    m.completed_per_tick = completed_series_;
    m.issued_per_tick = issued_series_;
    m.servers_per_tick = server_series_;
    m.offered_rate = rate_series_;
    m.completed_per_tick.resize(static_cast<std::size_t>(now_), 0);
    m.issued_per_tick.resize(static_cast<std::size_t>(now_), 0);
    m.servers_per_tick.resize(static_cast<std::size_t>(now_), 0);
    m.offered_rate.resize(static_cast<std::size_t>(now_), 0.0);
    std::vector<double> lat;
    for (const auto &[id, r] : requests_) {
        ++m.issued;
        if (r.completions > 1)
            ++m.duplicates;
        if (r.status == ClientRequest::completed) {
            ++m.completed;
            lat.push_back(static_cast<double>(r.done - r.issued));
        } else if (r.status == ClientRequest::failed) {
            ++m.failed;
        } else {
            ++m.pending;
        }
        m.ledger.push_back(r);
    }
    if (!lat.empty()) {
        std::sort(lat.begin(), lat.end());
        double sum = 0;
        for (double x : lat)
            sum += x;
        m.latency_mean = sum / static_cast<double>(lat.size());
        auto pct = [&](double p) {
            auto i = static_cast<std::size_t>(std::ceil(p * static_cast<double>(lat.size()))) - 1;
            return lat[std::min(i, lat.size() - 1)];
        };
        m.latency_p50 = pct(0.50);
        m.latency_p90 = pct(0.90);
        m.latency_p99 = pct(0.99);
    }
    m.rejected = rejected_;
    m.forwarded = forwarded_;
    m.em_lookups = em_lookups_;
    m.retries = retries_;
    m.migrations = log_;
    for (const auto &[ctx, rec] : in_flight_)
        m.migrations.push_back(rec);
    return m;
}

double MetricsReport::throughput(Tick from, Tick to) const
{
    Tick end = to < 0 ? static_cast<Tick>(completed_per_tick.size()) : std::min<Tick>(to, completed_per_tick.size());
    if (end <= from)
        return 0;
    std::int64_t n = 0;
    for (Tick t = from; t < end; ++t)
        n += completed_per_tick[static_cast<std::size_t>(t)];
    return static_cast<double>(n) / static_cast<double>(end - from);
}

namespace {

nlohmann::json migration_json(const MigrationRecord &m)
{
    return nlohmann::json{{"type", "migration"},
                          {"ctx", m.ctx.value},
                          {"src", m.src},
                          {"dst", m.dst},
                          {"phase", to_string(m.phase)},
                          {"started", m.started},
                          {"prepared", m.prepared},
                          {"stopped", m.stopped},
                          {"flipped", m.flipped},
                          {"src_learned", m.src_learned},
                          {"drained", m.drained},
                          {"done", m.done},
                          {"transfer_ticks", m.transfer_ticks},
                          {"unavailable_window", m.unavailable_window()},
                          {"deferred", m.deferred.size()},
                          {"rejected", m.rejected}};
}

} // namespace

nlohmann::json MetricsReport::summary_json() const
{
    int peak = 0;
    for (int s : servers_per_tick)
        peak = std::max(peak, s);
    return nlohmann::json{{"type", "summary"},
                          {"scenario", scenario},
                          {"seed", seed},
                          {"until", until},
                          {"issued", issued},
                          {"completed", completed},
                          {"failed", failed},
                          {"pending", pending},
                          {"duplicates", duplicates},
                          {"throughput", throughput()},
                          {"latency_mean", latency_mean},
                          {"latency_p50", latency_p50},
                          {"latency_p90", latency_p90},
                          {"latency_p99", latency_p99},
                          {"rejected", rejected},
                          {"forwarded", forwarded},
                          {"em_lookups", em_lookups},
                          {"retries", retries},
                          {"migrations", migrations.size()},
                          {"peak_servers", peak}};
}

std::vector<std::string> MetricsReport::records() const
{
    std::vector<std::string> out;
    for (std::size_t t = 0; t < completed_per_tick.size(); ++t)
        out.push_back(nlohmann::json{{"type", "tick"},
                                     {"t", t},
                                     {"offered", offered_rate[t]},
                                     {"issued", issued_per_tick[t]},
                                     {"completed", completed_per_tick[t]},
                                     {"servers", servers_per_tick[t]}}
                          .dump());
    for (const auto &m : migrations)
        out.push_back(migration_json(m).dump());
    out.push_back(summary_json().dump());
    return out;
}

std::string MetricsReport::csv() const
{
    std::ostringstream os;
    os << "tick,offered,issued,completed,servers\n";
    for (std::size_t t = 0; t < completed_per_tick.size(); ++t)
        os << t << ',' << offered_rate[t] << ',' << issued_per_tick[t] << ',' << completed_per_tick[t] << ','
           << servers_per_tick[t] << '\n';
    return os.str();
}

MetricsReport run_sim(const Scenario &scenario, std::optional<Tick> until)
{
    ClusterSim sim(scenario);
    sim.run_until(until.value_or(scenario.until));
    return sim.metrics();
}

SimSerializability check_sim_serializability(const ClusterSim &sim)
{
    SimSerializability out;
    const GlobalConfig &cfg = sim.engine();
    auto rt = check_realtime(cfg.finished);
    if (!rt.empty()) {
        out.message = rt.front();
        return out;
    }
    std::vector<ScriptEntry> order;
    for (const auto &e : cfg.finished)
        if (auto s = replay_entry(e))
            order.push_back(std::move(*s));
    LinearOutcomes lin = linear_outcomes(cfg.program, order);
    Digest actual = store_digest(cfg);
    if (!lin.digests.count(actual)) {
        out.message = lin.complete ? "final stores match no linear execution of the commit order"
                                   : "final stores not within the truncated linear oracle";
        return out;
    }
    if (!is_quiescent(cfg)) {
        out.message = "engine still has live events";
        return out;
    }
    out.pass = true;
    out.message = std::to_string(order.size()) + " events, final stores match the linear oracle";
    return out;
}

} // namespace aeon
