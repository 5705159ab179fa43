#include "aeon/engine.hpp"
#include "aeon/error.hpp"
#include "aeon/parser.hpp"
#include "random_program.hpp"
#include "scenarios.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>

using namespace aeon;
using aeon::testing::accepted_program;
using aeon::testing::events_from_text;
using aeon::testing::load_scenario_program;
using aeon::testing::Rng;

namespace {

// Applies the first enabled choice of the given kind (and context, if set).
bool take(GlobalConfig &cfg, TransitionChoice::Kind kind, const ContextId &ctx = {})
{
    for (const auto &ch : enabled_transitions(cfg))
        if (ch.kind == kind && (ctx.empty() || ch.ctx == ctx)) {
            apply_in_place(cfg, ch);
            return true;
        }
    return false;
}

bool has_rule(const std::vector<TraceEntry> &t, const std::string &rule, const ContextId &ctx = {})
{
    return std::any_of(t.begin(), t.end(),
                       [&](const TraceEntry &e) { return e.rule == rule && (ctx.empty() || e.ctx == ctx); });
}

std::set<ContextId> holders(const GlobalConfig &cfg, const EventId &eid)
{
    std::set<ContextId> out;
    for (const auto &[id, c] : cfg.contexts)
        if (c.holds(eid))
            out.insert(id);
    return out;
}

const char *kPromotion = R"(
class P {
  owns C;
  field c: ref C;
  method go() {
    self.c.x();
    self.c.y();
  }
}
class C {
  field n: int = 0;
  method x() { self.n := self.n + 1; }
  method y() { self.n := self.n * 10; }
  method z() { self.n := 5; }
}
topology {
  context P : P { c = C; }
  context C : C;
}
main {
  event P.go();
  event C.z();
}
)";

} // namespace

TEST(Engine, UnsharedEventGoesStraightToTarget)
{
    auto prog = load_scenario_program("game.aeon");
    auto cfg = initial_config(prog, {}, events_from_text("event Horse.ride(4);"));
    ASSERT_TRUE(take(cfg, TransitionChoice::dispatch));
    const auto &q = cfg.ctx("Horse").queue;
    ASSERT_EQ(q.size(), 1u);
    EXPECT_FALSE(q[0].lub_marker);
    EXPECT_EQ(q[0].decorator, Decorator::event);
    EXPECT_TRUE(has_rule(trace_entries(cfg.trace), "event_call_unshared", "Horse"));
}

TEST(Engine, SharedEventQueuesMarkerAtDominator)
{
    auto prog = load_scenario_program("game.aeon");
    auto cfg = initial_config(prog, {}, events_from_text("event Player1.steal(3);"));
    ASSERT_TRUE(take(cfg, TransitionChoice::dispatch));
    const auto &q = cfg.ctx("KingsRoom").queue;
    ASSERT_EQ(q.size(), 1u);
    EXPECT_TRUE(q[0].lub_marker);
    EXPECT_EQ(q[0].target, ContextId("Player1"));
    EXPECT_TRUE(cfg.ctx("Player1").queue.empty());
    EXPECT_EQ(cfg.events.begin()->second.dominator, ContextId("KingsRoom"));
    ASSERT_TRUE(take(cfg, TransitionChoice::activate, "KingsRoom"));
    EXPECT_TRUE(cfg.ctx("KingsRoom").has_placeholder(cfg.events.begin()->first));
    EXPECT_EQ(cfg.ctx("Player1").queue.size(), 1u);
    EXPECT_TRUE(has_rule(trace_entries(cfg.trace), "lub_lock_schedule_ex", "KingsRoom"));
}

TEST(Engine, TwoReadOnlyEventsShareAContext)
{
    auto cfg = initial_config(load_scenario_program("ro_concurrency.aeon"));
    ASSERT_TRUE(take(cfg, TransitionChoice::dispatch));
    ASSERT_TRUE(take(cfg, TransitionChoice::dispatch));
    ASSERT_TRUE(take(cfg, TransitionChoice::activate, "Ledger"));
    ASSERT_TRUE(take(cfg, TransitionChoice::activate, "Ledger"));
    const auto &acts = cfg.ctx("Ledger").activations;
    ASSERT_EQ(acts.size(), 2u);
    EXPECT_NE(acts[0].eid, acts[1].eid);
    EXPECT_EQ(acts[0].am, AccessMode::ro);
    EXPECT_EQ(acts[1].am, AccessMode::ro);
    EXPECT_TRUE(check_invariants(cfg).empty());
}

TEST(Engine, ExclusiveHolderBlocksOtherEvents)
{
    auto prog = load_scenario_program("game.aeon");
    auto cfg = initial_config(prog, {}, events_from_text("event Horse.ride(1); event Horse.ride(2);"));
    ASSERT_TRUE(take(cfg, TransitionChoice::dispatch));
    ASSERT_TRUE(take(cfg, TransitionChoice::dispatch));
    ASSERT_TRUE(take(cfg, TransitionChoice::activate, "Horse"));
    EXPECT_FALSE(head_admissible(cfg, "Horse"));
    EXPECT_FALSE(take(cfg, TransitionChoice::activate, "Horse"));
}

TEST(Engine, CallPromotionLetsHolderContinue)
{
    auto prog = accepted_program(kPromotion);
    auto cfg = initial_config(prog);
    ASSERT_TRUE(take(cfg, TransitionChoice::dispatch));        // E1 at P
    ASSERT_TRUE(take(cfg, TransitionChoice::activate, "P"));   //
    ASSERT_TRUE(take(cfg, TransitionChoice::lift, "P"));       // call x
    ASSERT_TRUE(take(cfg, TransitionChoice::activate, "C"));   //
    ASSERT_TRUE(take(cfg, TransitionChoice::lift, "C"));       // x returns, C keeps E1's lock
    ASSERT_TRUE(take(cfg, TransitionChoice::dispatch));        // E2 queued at C behind the lock
    ASSERT_TRUE(take(cfg, TransitionChoice::lift, "P"));       // call y queued behind E2
    EXPECT_EQ(cfg.ctx("C").queue.size(), 2u);
    EXPECT_FALSE(head_admissible(cfg, "C"));
    ASSERT_TRUE(take(cfg, TransitionChoice::promote, "C"));
    EXPECT_EQ(cfg.ctx("C").queue.front().eid, EventId{1});
    EXPECT_TRUE(has_rule(trace_entries(cfg.trace), "call_promotion", "C"));
    auto done = run_to_completion(cfg, 0);
    ASSERT_TRUE(done.completed);
    EXPECT_EQ(done.final.ctx("C").store.at("n"), Value(5));
    EXPECT_EQ(done.final.finished.size(), 2u);
}

TEST(Engine, DirectCallToGrandchildLocksIntermediate)
{
    auto prog = accepted_program(R"(
class P { owns M; field m: ref M; method go() { #G.f(); } }
class M { owns G; field g: ref G; }
class G { field k: int = 0; method f() { self.k := self.k + 1; } }
topology {
  context P : P { m = M; }
  context M : M { g = G; }
  context G : G;
}
main { event P.go(); }
)");
    auto r = run_to_completion(initial_config(prog), 3);
    ASSERT_TRUE(r.completed);
    EXPECT_TRUE(has_rule(r.trace, "auto_lock", "M"));
    EXPECT_EQ(r.final.ctx("G").store.at("k"), Value(1));
}

TEST(Engine, CommitReleasesEverythingAtOnce)
{
    auto prog = load_scenario_program("treasure_horse.aeon");
    auto cfg = initial_config(prog, {}, events_from_text("event Player1.steal(5);"));
    EventId e1{1};
    std::set<ContextId> held;
    for (int guard = 0; guard < 200; ++guard) {
        auto enabled = enabled_transitions(cfg);
        ASSERT_FALSE(enabled.empty());
        auto commit = std::find_if(enabled.begin(), enabled.end(),
                                   [](const auto &c) { return c.kind == TransitionChoice::commit; });
        if (commit != enabled.end()) {
            EXPECT_TRUE(commit_eligible(cfg, e1));
            apply_in_place(cfg, *commit);
            break;
        }
        if (cfg.find_event(e1)) {
            EXPECT_THROW(commit_event(cfg, e1), Error);
        }
        apply_in_place(cfg, enabled.front());
        auto now = holders(cfg, e1);
        // locks only grow before commit
        EXPECT_TRUE(std::includes(now.begin(), now.end(), held.begin(), held.end()));
        held = now;
    }
    EXPECT_EQ(held, (std::set<ContextId>{"Horse", "KingsRoom", "Player1", "Treasure"}));
    EXPECT_TRUE(holders(cfg, e1).empty());
    ASSERT_EQ(cfg.finished.size(), 1u);
    EXPECT_FALSE(cfg.finished[0].failed);
    auto trace = trace_entries(cfg.trace);
    EXPECT_EQ(trace.back().rule, "event_return_commit");
    EXPECT_EQ(trace.back().detail, "released Horse,KingsRoom,Player1,Treasure");
}

TEST(Engine, NestedEventsIssueAfterCreatorCommits)
{
    int nested_seen = 0;
    for (std::uint64_t seed = 0; seed < 150; ++seed) {
        auto g = aeon::testing::random_program(seed);
        auto r = run_to_completion(initial_config(g.program), seed);
        ASSERT_TRUE(r.completed) << "seed " << seed;
        std::map<EventId, const EventInfo *> by_id;
        for (const auto &e : r.final.finished)
            by_id[e.eid] = &e;
        for (const auto &e : r.final.finished) {
            if (!e.parent)
                continue;
            ++nested_seen;
            const EventInfo *p = by_id.at(*e.parent);
            ASSERT_TRUE(p->commit_tick.has_value());
            EXPECT_GT(e.issue_tick, *p->commit_tick) << "seed " << seed;
        }
    }
    EXPECT_GT(nested_seen, 0);
}

TEST(Engine, EmptyScriptHasNothingEnabled)
{
    auto prog = load_scenario_program("game.aeon");
    auto cfg = initial_config(prog, {}, std::vector<ScriptEntry>{});
    EXPECT_TRUE(enabled_transitions(cfg).empty());
    EXPECT_TRUE(is_quiescent(cfg));
    auto r = run_to_completion(cfg, 1);
    EXPECT_TRUE(r.completed);
    EXPECT_TRUE(r.trace.empty());
}

TEST(Engine, StaleChoiceRejected)
{
    auto prog = load_scenario_program("game.aeon");
    auto cfg = initial_config(prog);
    try {
        apply_in_place(cfg, TransitionChoice{TransitionChoice::activate, "Horse", EventId{1}, 0});
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::stale_choice);
    }
}

TEST(Engine, ApplyLeavesSourceConfigUntouched)
{
    auto cfg = initial_config(load_scenario_program("treasure_horse.aeon"));
    auto before = config_text(cfg);
    auto next = apply(cfg, enabled_transitions(cfg).front());
    EXPECT_EQ(config_text(cfg), before);
    EXPECT_NE(config_text(next), before);
}

TEST(Engine, ReplayingTraceReproducesFinalState)
{
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        auto g = aeon::testing::random_program(seed);
        auto start = initial_config(g.program);
        auto r = run_to_completion(start, seed * 31 + 7);
        ASSERT_TRUE(r.completed);
        GlobalConfig replay = start;
        std::uint64_t last = 0;
        for (const auto &e : r.trace) {
            if (e.step == last)
                continue;
            last = e.step;
            apply_in_place(replay, e.choice);
        }
        EXPECT_EQ(store_digest(replay), store_digest(r.final)) << "seed " << seed;
        EXPECT_EQ(config_text(replay), config_text(r.final)) << "seed " << seed;
    }
}

TEST(Engine, IndependentEventsAgreeAcrossSchedules)
{
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto pair = aeon::testing::random_independent_pair(seed);
        auto start = initial_config(pair.program.program);
        std::set<Digest> finals;
        for (std::uint64_t policy = 0; policy < 8; ++policy) {
            auto r = run_to_completion(start, policy);
            ASSERT_TRUE(r.completed);
            finals.insert(store_digest(r.final));
        }
        EXPECT_EQ(finals.size(), 1u) << "seed " << seed << "\n" << pair.program.text;
    }
}

TEST(Engine, TreasureHorseCompletesUnderEverySeed)
{
    auto start = initial_config(load_scenario_program("treasure_horse.aeon"));
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto r = run_to_completion(start, seed);
        ASSERT_TRUE(r.completed) << "seed " << seed;
        ASSERT_EQ(r.final.finished.size(), 2u);
        for (const auto &e : r.final.finished)
            EXPECT_FALSE(e.failed) << e.failure;
    }
}

TEST(Engine, SyncReturnGoesToTheRecordedCaller)
{
    // E's async call to M and its own sync call both wait on C
    auto prog = accepted_program(R"(
class P {
  owns M, C;
  field r: int = 0;
  method go() {
    async #M.a();
    t := #C.get();
    self.r := t;
  }
}
class M {
  owns C;
  field got: int = 0;
  method a() {
    u := #C.get();
    self.got := u + 100;
  }
}
class C {
  field v: int = 7;
  method get() -> int { self.v := self.v + 1; return self.v; }
}
topology {
  context P : P;
  context M : M;
  context C : C;
  P -> M, C;
  M -> C;
}
main { event P.go(); }
)");
    auto start = initial_config(prog);
    std::set<std::pair<std::int64_t, std::int64_t>> outcomes;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        auto r = run_to_completion(start, seed);
        ASSERT_TRUE(r.completed);
        ASSERT_FALSE(r.final.finished.at(0).failed) << r.final.finished.at(0).failure;
        auto pr = r.final.ctx("P").store.at("r");
        auto mg = r.final.ctx("M").store.at("got");
        outcomes.insert({pr.as_int(), mg.as_int()});
        // each caller received one of the two increments
        std::set<std::int64_t> got{pr.as_int(), mg.as_int() - 100};
        EXPECT_EQ(got, (std::set<std::int64_t>{8, 9}));
    }
    EXPECT_EQ(outcomes.size(), 2u);
}

TEST(Engine, RuntimeErrorAbortsOnlyThatEvent)
{
    // unchecked program: a ro method that writes escapes to runtime
    auto prog = std::make_shared<const Program>(parse_program(R"(
class A { field n: int = 0; ro method bad() -> int { self.n := 1; return 0; } method ok() { self.n := self.n + 2; } }
class B { field m: int = 9223372036854775807; method over() { self.m := self.m + 1; } }
topology { context a : A; context b : B; }
main { event a.bad(); event a.ok(); event b.over(); }
)"));
    auto r = run_to_completion(initial_config(prog), 4);
    ASSERT_TRUE(r.completed);
    std::map<std::string, const EventInfo *> by;
    for (const auto &e : r.final.finished)
        by[e.method] = &e;
    EXPECT_TRUE(by.at("bad")->failed);
    EXPECT_NE(by.at("bad")->failure.find("access-violation"), std::string::npos);
    EXPECT_TRUE(by.at("over")->failed);
    EXPECT_NE(by.at("over")->failure.find("overflow"), std::string::npos);
    EXPECT_FALSE(by.at("ok")->failed);
    EXPECT_EQ(r.final.ctx("a").store.at("n"), Value(2));
    EXPECT_TRUE(has_rule(r.trace, "lift_intra/abort"));
}

TEST(Engine, InvariantsHoldAlongRandomWalks)
{
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
        auto g = aeon::testing::random_program(seed);
        auto cfg = initial_config(g.program);
        Rng rng(seed ^ 0xabc);
        std::map<EventId, std::set<ContextId>> held;
        for (int guard = 0; guard < 5000; ++guard) {
            auto enabled = enabled_transitions(cfg);
            if (enabled.empty())
                break;
            apply_in_place(cfg, enabled[rng.below(enabled.size())]);
            auto bad = check_invariants(cfg);
            ASSERT_TRUE(bad.empty()) << "seed " << seed << ": " << bad.front();
            for (const auto &[eid, e] : cfg.events) {
                auto now = holders(cfg, eid);
                auto &prev = held[eid];
                ASSERT_TRUE(std::includes(now.begin(), now.end(), prev.begin(), prev.end()))
                    << "seed " << seed << " " << eid;
                prev = now;
            }
        }
        EXPECT_TRUE(is_quiescent(cfg)) << "seed " << seed;
    }
}
