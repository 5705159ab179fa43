#include "aeon/engine.hpp"
#include "aeon/verifier.hpp"
#include "random_program.hpp"
#include "scenarios.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>

using namespace aeon;
using aeon::testing::accepted_program;
using aeon::testing::events_from_text;
using aeon::testing::load_scenario_program;
using aeon::testing::Rng;

namespace {

const char *kFlat = R"(
class R {
  owns K;
}
class K {
  field n: int = 0;
  method bump() { self.n := self.n + 1; }
  ro method read() -> int { return self.n; }
}
topology {
  context R : R;
  context C0 : K;
  context C1 : K;
  context C2 : K;
  context C3 : K;
  R -> C0, C1, C2, C3;
}
main {
}
)";

Activation running(std::uint64_t e, AccessMode am = AccessMode::ex)
{
    Activation a;
    a.eid = EventId{e};
    a.am = am;
    a.running = true;
    return a;
}

Request waiting(std::uint64_t e, AccessMode am = AccessMode::ex)
{
    Request r;
    r.eid = EventId{e};
    r.method = "bump";
    r.am = am;
    return r;
}

// The witness closes: eid_i active at ctx_i and queued at ctx_{i+1}.
bool witness_closes(const GlobalConfig &cfg, const DeadlockWitness &w)
{
    const auto n = w.cycle.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto &[ctx, eid] = w.cycle[i];
        const auto &next = cfg.contexts.at(w.cycle[(i + 1) % n].first);
        const auto &acts = cfg.contexts.at(ctx).activations;
        bool active = std::any_of(acts.begin(), acts.end(), [&](const Activation &a) { return a.eid == eid; });
        bool queued =
            std::any_of(next.queue.begin(), next.queue.end(), [&](const Request &r) { return r.eid == eid; });
        if (!active || !queued)
            return false;
    }
    return n > 0;
}

// Wait-for graph over events: e -> f when e is queued where f is active and e is not.
bool event_cycle_oracle(const GlobalConfig &cfg)
{
    std::set<EventId> active_somewhere;
    for (const auto &[id, c] : cfg.contexts)
        for (const auto &a : c.activations)
            active_somewhere.insert(a.eid);
    std::map<EventId, std::set<EventId>> edges;
    for (const auto &[id, c] : cfg.contexts)
        for (const auto &r : c.queue) {
            if (!active_somewhere.count(r.eid) || c.holds(r.eid))
                continue;
            for (const auto &a : c.activations)
                if (a.eid != r.eid)
                    edges[r.eid].insert(a.eid);
        }
    std::map<EventId, int> color;
    std::function<bool(const EventId &)> dfs = [&](const EventId &e) {
        color[e] = 1;
        for (const auto &f : edges[e]) {
            if (color[f] == 1 || (color[f] == 0 && dfs(f)))
                return true;
        }
        color[e] = 2;
        return false;
    };
    for (const auto &e : active_somewhere)
        if (color[e] == 0 && dfs(e))
            return true;
    return false;
}

std::int64_t field(const GlobalConfig &cfg, const std::string &ctx, const std::string &f)
{
    return cfg.contexts.at(ContextId(ctx)).store.at(f).as_int();
}

EventInfo info(std::uint64_t e, std::uint64_t issue, std::uint64_t commit)
{
    EventInfo i;
    i.eid = EventId{e};
    i.issue_tick = issue;
    i.commit_tick = commit;
    return i;
}

} // namespace

TEST(Deadlock, FreshConfigHasNone)
{
    auto cfg = initial_config(load_scenario_program("treasure_horse.aeon"));
    EXPECT_FALSE(detect_deadlock(cfg).has_value());
}

TEST(Deadlock, HandBuiltTwoCycle)
{
    auto cfg = initial_config(accepted_program(kFlat));
    cfg.ctx("C0").activations.push_back(running(1));
    cfg.ctx("C1").queue.push_back(waiting(1));
    cfg.ctx("C1").activations.push_back(running(2));
    cfg.ctx("C0").queue.push_back(waiting(2));
    auto w = detect_deadlock(cfg);
    ASSERT_TRUE(w.has_value());
    EXPECT_EQ(w->cycle.size(), 2u);
    EXPECT_TRUE(witness_closes(cfg, *w)) << w->str();
}

TEST(Deadlock, ChainWithoutCycleIsNotADeadlock)
{
    auto cfg = initial_config(accepted_program(kFlat));
    cfg.ctx("C0").activations.push_back(running(1));
    cfg.ctx("C1").queue.push_back(waiting(1));
    cfg.ctx("C1").activations.push_back(running(2));
    cfg.ctx("C2").queue.push_back(waiting(2));
    EXPECT_FALSE(detect_deadlock(cfg).has_value());
}

TEST(Deadlock, MatchesEventWaitForOracleOnRandomConfigs)
{
    auto base = initial_config(accepted_program(kFlat));
    const std::vector<std::string> ctxs = {"C0", "C1", "C2", "C3"};
    int found = 0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        Rng rng(seed);
        GlobalConfig cfg = base;
        int events = 2 + static_cast<int>(rng.below(3));
        for (int e = 1; e <= events; ++e) {
            cfg.ctx(ctxs[rng.below(ctxs.size())]).activations.push_back(running(static_cast<std::uint64_t>(e)));
            int waits = static_cast<int>(rng.below(2));
            for (int k = 0; k < waits; ++k)
                cfg.ctx(ctxs[rng.below(ctxs.size())]).queue.push_back(waiting(static_cast<std::uint64_t>(e)));
        }
        auto w = detect_deadlock(cfg);
        bool expect = event_cycle_oracle(cfg);
        EXPECT_EQ(w.has_value(), expect) << "seed " << seed << "\n" << config_text(cfg);
        if (w) {
            ++found;
            EXPECT_TRUE(witness_closes(cfg, *w)) << "seed " << seed << " " << w->str();
        }
    }
    EXPECT_GT(found, 0);
}

TEST(Deadlock, ReadOnlyHoldersDoNotBlockReadOnlyHead)
{
    auto cfg = initial_config(accepted_program(kFlat));
    cfg.ctx("C0").activations.push_back(running(1, AccessMode::ro));
    cfg.ctx("C1").queue.push_back(waiting(1, AccessMode::ro));
    cfg.ctx("C1").activations.push_back(running(2, AccessMode::ro));
    cfg.ctx("C0").queue.push_back(waiting(2, AccessMode::ro));
    EXPECT_FALSE(detect_deadlock(cfg).has_value());
}

TEST(Linear, SequentialIncrementsAccumulate)
{
    auto prog = accepted_program(kFlat);
    auto r = linear_execute(prog, events_from_text("event C0.bump(); event C0.bump();"));
    EXPECT_EQ(field(r.final, "C0", "n"), 2);
    EXPECT_EQ(r.finished.size(), 2u);
}

TEST(Linear, TimelineOrderIsVisibleInHorse)
{
    auto prog = load_scenario_program("timeline.aeon");
    auto r = linear_execute(prog, events_from_text("event Horse.ride(9); event Player1.steal(10);"));
    // the ride by E3 happened first, so E1's ride is the second trip and the last rider
    EXPECT_EQ(field(r.final, "Horse", "trips"), 2);
    EXPECT_EQ(field(r.final, "Horse", "rider"), 1);
    auto rev = linear_execute(prog, events_from_text("event Player1.steal(10); event Horse.ride(9);"));
    EXPECT_EQ(field(rev.final, "Horse", "rider"), 9);
    EXPECT_NE(r.digest, rev.digest);
}

TEST(Linear, SingleEventMatchesEngineRun)
{
    int compared = 0, racy = 0;
    for (std::uint64_t seed = 0; seed < 150; ++seed) {
        auto g = aeon::testing::random_program(seed);
        if (g.text.find("event #") != std::string::npos)
            continue; // nested events are replayed separately by the oracle
        auto script = initial_config(g.program).script;
        for (const auto &e : *script) {
            std::vector<ScriptEntry> one = {e};
            one[0].at_tick = 0;
            auto lin = linear_execute(g.program, one);
            auto all = linear_outcomes(g.program, one);
            ASSERT_TRUE(all.complete);
            ASSERT_TRUE(all.digests.count(lin.digest));
            if (all.digests.size() > 1)
                ++racy; // an async call races a later call inside the event
            for (std::uint64_t policy = 0; policy < 4; ++policy) {
                auto run = run_to_completion(initial_config(g.program, {}, one), seed * 4 + policy);
                ASSERT_TRUE(run.completed);
                Digest d = store_digest(run.final);
                if (all.digests.size() == 1)
                    EXPECT_EQ(lin.digest, d) << "seed " << seed << " " << e.target << "." << e.method;
                else
                    EXPECT_TRUE(all.digests.count(d)) << "seed " << seed << " " << e.target << "." << e.method;
            }
            ++compared;
        }
    }
    EXPECT_GT(compared, 50);
    EXPECT_LT(racy, compared);
}

TEST(Realtime, AdversarialHistoryFlagged)
{
    // b was issued after a committed, yet b appears first in the commit order
    EventInfo a = info(1, 0, 5);
    EventInfo b = info(2, 6, 8);
    EXPECT_TRUE(check_realtime({a, b}).empty());
    EXPECT_FALSE(check_realtime({b, a}).empty());
    // overlapping events may commit in either order
    EventInfo c = info(3, 0, 9);
    EventInfo d = info(4, 2, 4);
    EXPECT_TRUE(check_realtime({c, d}).empty());
    EXPECT_TRUE(check_realtime({d, c}).empty());
}

TEST(Serializability, IndependentEngineRunsMatchOracle)
{
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto pair = aeon::testing::random_independent_pair(seed);
        OracleCache oracle(pair.program.program);
        auto run = run_to_completion(initial_config(pair.program.program), seed);
        ASSERT_TRUE(run.completed);
        auto v = check_serializability(run.final, oracle);
        EXPECT_FALSE(v.has_value()) << "seed " << seed << ": " << (v ? v->message : "");
    }
}

TEST(Explore, SingleEventHasOneTerminalState)
{
    auto prog = load_scenario_program("game.aeon");
    auto rep = explore(prog, {}, events_from_text("event Player1.steal(3);"));
    EXPECT_EQ(rep.terminal_states.size(), 1u);
    EXPECT_EQ(rep.violation_count, 0u);
    EXPECT_EQ(rep.verdict(), ExplorationReport::pass);
    EXPECT_EQ(rep.exit_code(), 0);
}

TEST(Explore, IndependentEventsConvergeOnOneState)
{
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        auto pair = aeon::testing::random_independent_pair(seed);
        auto rep = explore(pair.program.program);
        EXPECT_EQ(rep.verdict(), ExplorationReport::pass) << "seed " << seed;
        EXPECT_EQ(rep.terminal_states.size(), 1u) << "seed " << seed << "\n" << pair.program.text;
        EXPECT_GT(rep.configs_visited, 1u);
    }
}

TEST(Explore, ConflictingEventsMatchOneLinearization)
{
    auto prog = load_scenario_program("treasure_horse.aeon");
    auto e = events_from_text("event Player1.steal(10); event Player2.collect(5);");
    std::set<Digest> orders = {linear_execute(prog, {e[0], e[1]}).digest,
                               linear_execute(prog, {e[1], e[0]}).digest};
    auto rep = explore(prog);
    EXPECT_EQ(rep.verdict(), ExplorationReport::pass) << report_text(rep);
    EXPECT_GE(rep.terminal_states.size(), 1u);
    EXPECT_LE(rep.terminal_states.size(), 2u);
    for (const auto &d : rep.terminal_states)
        EXPECT_TRUE(orders.count(d)) << d.hex();
}

TEST(Explore, Deterministic)
{
    auto prog = load_scenario_program("timeline.aeon");
    auto a = report_json(explore(prog));
    auto b = report_json(explore(prog));
    EXPECT_EQ(a.dump(), b.dump());
}

TEST(Explore, DisabledDominatorSequencingDeadlocks)
{
    auto prog = load_scenario_program("treasure_horse.aeon");
    ExploreOptions opts;
    opts.engine.dominator_sequencing = false;
    opts.invariants = false;
    auto rep = explore(prog, opts);
    ASSERT_FALSE(rep.deadlocks.empty());
    EXPECT_EQ(rep.verdict(), ExplorationReport::violation);
    EXPECT_EQ(rep.exit_code(), 2);

    // the reported trace leads back to a config with a closing witness
    for (const auto &[w, trace] : rep.deadlocks) {
        GlobalConfig cfg = initial_config(prog, opts.engine);
        std::uint64_t last = 0;
        for (const auto &t : trace) {
            if (t.step == last)
                continue;
            last = t.step;
            apply_in_place(cfg, t.choice);
        }
        auto again = detect_deadlock(cfg);
        ASSERT_TRUE(again.has_value());
        EXPECT_TRUE(witness_closes(cfg, *again));
        EXPECT_TRUE(witness_closes(cfg, w));
    }
}

TEST(Explore, ExhaustedBoundIsInconclusive)
{
    auto prog = load_scenario_program("timeline.aeon");
    ExploreOptions opts;
    opts.max_configs = 5;
    auto rep = explore(prog, opts);
    EXPECT_TRUE(rep.bound_exhausted);
    EXPECT_EQ(rep.verdict(), ExplorationReport::inconclusive);
    EXPECT_EQ(rep.exit_code(), 3);
}

TEST(Commutativity, IndependentPairsCommute)
{
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        auto pair = aeon::testing::random_independent_pair(seed);
        auto r = check_commutativity(pair.program.program, pair.e0, pair.e1);
        EXPECT_EQ(r.status, CommutativityResult::pass) << "seed " << seed << ": " << r.message;
        EXPECT_EQ(r.terminal_states.size(), 1u);
    }
}

TEST(Commutativity, TwoReadOnlyEventsOnOneContext)
{
    auto prog = load_scenario_program("ro_concurrency.aeon");
    auto e = events_from_text("event Ledger.total(); event Ledger.total();");
    auto r = check_commutativity(prog, e[0], e[1]);
    EXPECT_EQ(r.status, CommutativityResult::pass) << r.message;
}

TEST(Commutativity, SharedChildIsNotIndependent)
{
    auto prog = load_scenario_program("treasure_horse.aeon");
    auto e = events_from_text("event Player1.steal(10); event Player2.collect(5);");
    auto r = check_commutativity(prog, e[0], e[1]);
    EXPECT_EQ(r.status, CommutativityResult::not_independent) << r.message;
}

TEST(Commutativity, NestedEventNumberingDoesNotMatter)
{
    // the nested event of the first pair member may take the second event id
    auto pair = aeon::testing::random_independent_pair(111);
    ASSERT_NE(pair.program.text.find("event #"), std::string::npos);
    auto r = check_commutativity(pair.program.program, pair.e0, pair.e1);
    EXPECT_EQ(r.status, CommutativityResult::pass) << r.message;
}
