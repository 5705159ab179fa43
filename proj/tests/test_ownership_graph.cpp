#include "aeon/error.hpp"
#include "aeon/ownership_graph.hpp"
#include "aeon/parser.hpp"
#include "aeon/static_checks.hpp"
#include "random_program.hpp"
#include "scenarios.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace aeon;
using aeon::testing::Rng;

namespace {

using Edges = std::vector<std::pair<ContextId, ContextId>>;

std::string node_name(int i)
{
    char buf[8];
    std::snprintf(buf, sizeof buf, "N%02d", i);
    return buf;
}

struct RandomDag {
    std::vector<ContextId> nodes;
    Edges edges;
};

// Edges only go from lower to higher index, so the result is acyclic.
RandomDag random_dag(std::uint64_t seed, int n, int edge_pct)
{
    Rng rng(seed);
    RandomDag d;
    for (int i = 0; i < n; ++i)
        d.nodes.emplace_back(node_name(i));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.chance(edge_pct))
                d.edges.emplace_back(d.nodes[i], d.nodes[j]);
    return d;
}

OwnershipGraph build(const RandomDag &d)
{
    OwnershipGraph g;
    for (const auto &n : d.nodes)
        g.add_node(n, "K");
    for (const auto &[p, c] : d.edges)
        g.add_ownership(p, c);
    return g;
}

// Independent helpers working from a bare edge list.
struct EdgeOracle {
    std::set<ContextId> nodes;
    Edges edges;

    explicit EdgeOracle(const OwnershipGraph &g)
    {
        for (const auto &n : g.nodes())
            nodes.insert(n);
        edges = g.edges();
    }

    static bool is_virtual(const ContextId &c) { return c.value.starts_with("~"); }

    std::set<ContextId> children(const ContextId &c) const
    {
        std::set<ContextId> out;
        for (const auto &[p, ch] : edges)
            if (p == c)
                out.insert(ch);
        return out;
    }

    // fixpoint: keep adding children of members until nothing changes
    std::set<ContextId> desc(const ContextId &c) const
    {
        std::set<ContextId> out = children(c);
        for (bool grew = true; grew;) {
            grew = false;
            for (const auto &[p, ch] : edges)
                if (out.count(p) && out.insert(ch).second)
                    grew = true;
        }
        return out;
    }

    bool below(const ContextId &a, const ContextId &b) const { return desc(b).count(a) != 0; }

    std::set<ContextId> share(const ContextId &c) const
    {
        auto dc = desc(c);
        std::set<ContextId> out;
        for (const auto &u : nodes) {
            if (is_virtual(u))
                continue;
            for (const auto &ch : children(u))
                if (dc.count(ch))
                    out.insert(u);
            bool incomparable = u != c && !below(u, c) && !below(c, u);
            if (incomparable)
                for (const auto &x : desc(u))
                    if (dc.count(x))
                        out.insert(u);
        }
        return out;
    }

    bool common_ancestor(const ContextId &u, const std::set<ContextId> &s) const
    {
        auto du = desc(u);
        return std::all_of(s.begin(), s.end(), [&](const ContextId &x) { return x == u || du.count(x); });
    }

    // no node of c's subtree is reachable from a root along a path avoiding d
    bool cuts(const ContextId &d, const ContextId &c) const
    {
        std::set<ContextId> seen;
        std::vector<ContextId> stack;
        for (const auto &n : nodes) {
            bool root = std::none_of(edges.begin(), edges.end(),
                                     [&](const auto &e) { return e.second == n && !is_virtual(e.first); });
            if (root && n != d && !is_virtual(n)) {
                seen.insert(n);
                stack.push_back(n);
            }
        }
        while (!stack.empty()) {
            auto cur = stack.back();
            stack.pop_back();
            for (const auto &ch : children(cur))
                if (ch != d && seen.insert(ch).second)
                    stack.push_back(ch);
        }
        auto sub = desc(c);
        sub.insert(c);
        sub.erase(d);
        return std::none_of(sub.begin(), sub.end(), [&](const ContextId &x) { return seen.count(x) != 0; });
    }

    bool acyclic() const
    {
        std::map<ContextId, int> state;
        std::function<bool(const ContextId &)> dfs = [&](const ContextId &u) {
            state[u] = 1;
            for (const auto &ch : children(u)) {
                if (state[ch] == 1)
                    return false;
                if (state[ch] == 0 && !dfs(ch))
                    return false;
            }
            state[u] = 2;
            return true;
        };
        for (const auto &n : nodes)
            if (state[n] == 0 && !dfs(n))
                return false;
        return true;
    }
};

std::map<ContextId, ContextId> real_dominators(const OwnershipGraph &g)
{
    std::map<ContextId, ContextId> out;
    for (const auto &[n, d] : g.dominator_cache())
        if (!g.is_virtual(n))
            out[n] = d;
    return out;
}

OwnershipGraph game_graph()
{
    return aeon::testing::load_scenario_program("game.aeon")->build_graph();
}

} // namespace

TEST(OwnershipGraph, GameChildren)
{
    auto g = game_graph();
    EXPECT_EQ(g.children("Castle"), (ContextSet{"Armory", "KingsRoom"}));
    EXPECT_TRUE(g.children("Sword").empty());
    EXPECT_THROW(g.children("Nowhere"), Error);
}

TEST(OwnershipGraph, GameDescendants)
{
    auto g = game_graph();
    ContextSet all;
    for (const auto &n : g.nodes())
        if (n != ContextId("Castle"))
            all.insert(n);
    EXPECT_EQ(g.descendants("Castle"), all);
    EXPECT_TRUE(g.descendants("Horse").empty());
}

TEST(OwnershipGraph, GameShareAndDominators)
{
    auto g = game_graph();
    auto s = g.share("Player1");
    EXPECT_TRUE(s.count("Player2"));
    EXPECT_TRUE(s.count("KingsRoom"));
    EXPECT_TRUE(g.share("Sword").empty());
    EXPECT_EQ(g.dominator("Player1"), ContextId("KingsRoom"));
    EXPECT_EQ(g.dominator("Player2"), ContextId("KingsRoom"));
    EXPECT_EQ(g.dominator("Player3"), ContextId("Armory"));
    EXPECT_EQ(g.dominator("Sword"), ContextId("Sword"));
    EXPECT_EQ(g.dominator("Castle"), ContextId("Castle"));
    EXPECT_EQ(g.lub({"Player1", "Player2", "KingsRoom"}), ContextId("KingsRoom"));
    EXPECT_EQ(g.lub({"Horse"}), ContextId("Horse"));
    EXPECT_THROW(g.dominator("Nowhere"), Error);
}

TEST(OwnershipGraph, ChildrenAndDescendantsMatchEdgeScan)
{
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto d = random_dag(seed, 20, 12);
        auto g = build(d);
        EdgeOracle o(g);
        for (const auto &n : d.nodes) {
            EXPECT_EQ(g.children(n), o.children(n)) << "seed " << seed << " node " << n;
            EXPECT_EQ(g.descendants(n), o.desc(n)) << "seed " << seed << " node " << n;
        }
    }
}

TEST(OwnershipGraph, ShareMatchesFormula)
{
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto d = random_dag(seed, 14, 20);
        auto g = build(d);
        EdgeOracle o(g);
        for (const auto &n : d.nodes) {
            EXPECT_EQ(g.share(n), o.share(n)) << "seed " << seed << " node " << n;
        }
    }
}

TEST(OwnershipGraph, LubIsMinimalCommonAncestor)
{
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto d = random_dag(seed, 12, 25);
        auto g = build(d);
        Rng rng(seed * 7 + 1);
        for (int trial = 0; trial < 10; ++trial) {
            ContextSet s;
            int k = 1 + static_cast<int>(rng.below(3));
            for (int i = 0; i < k; ++i)
                s.insert(d.nodes[rng.below(d.nodes.size())]);
            auto found = g.find_lub(s);
            EdgeOracle o(g);
            std::set<ContextId> common;
            for (const auto &u : o.nodes)
                if (o.common_ancestor(u, s))
                    common.insert(u);
            std::set<ContextId> minimal;
            for (const auto &u : common) {
                auto du = o.desc(u);
                if (std::none_of(common.begin(), common.end(), [&](const ContextId &v) { return du.count(v); }))
                    minimal.insert(u);
            }
            if (minimal.size() == 1) {
                ASSERT_TRUE(found.has_value());
                EXPECT_EQ(*found, *minimal.begin());
                EXPECT_EQ(g.lub(s), *minimal.begin());
            } else {
                EXPECT_FALSE(found.has_value());
                auto v = g.lub(s);
                EXPECT_TRUE(g.is_virtual(v));
                for (const auto &x : s)
                    EXPECT_TRUE(g.reaches(v, x));
            }
        }
    }
}

TEST(OwnershipGraph, DiamondSynthesizesOneVirtualRoot)
{
    OwnershipGraph g;
    for (const char *n : {"A", "B", "X"})
        g.add_node(n, "K");
    g.add_ownership("A", "X");
    g.add_ownership("B", "X");
    auto before = g.virtual_nodes().size();
    auto v1 = g.lub({"A", "B"});
    auto v2 = g.lub({"B", "A"});
    EXPECT_EQ(v1, v2);
    EXPECT_TRUE(g.is_virtual(v1));
    EXPECT_EQ(g.children(v1), (ContextSet{"A", "B"}));
    EXPECT_EQ(g.virtual_nodes().size(), std::max<std::size_t>(before, 1));
    EXPECT_EQ(g.lub({v1}), v1);
}

TEST(OwnershipGraph, LubOrderIndependent)
{
    auto g = game_graph();
    ContextSet s{"Player3", "Sword"};
    auto a = g.lub(s);
    auto b = g.lub(ContextSet{"Sword", "Player3"});
    EXPECT_EQ(a, b);
    EXPECT_EQ(g.lub({a}), a);
}

TEST(OwnershipGraph, DominatorSatisfiesContainmentAndCut)
{
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        auto d = random_dag(seed, 10, 25);
        auto g = build(d);
        EdgeOracle o(g);
        for (const auto &n : d.nodes) {
            const auto &dom = g.dominator(n);
            auto s = o.share(n);
            s.insert(n);
            // containment: every shared context sits under the dominator
            EXPECT_TRUE(o.common_ancestor(dom, s)) << "seed " << seed << " node " << n << " dom " << dom;
            EXPECT_TRUE(dom == n || g.is_virtual(dom) || o.below(n, dom)) << "seed " << seed;
            if (g.is_virtual(dom))
                continue;
            EXPECT_TRUE(o.cuts(dom, n)) << "seed " << seed << " node " << n << " dom " << dom;
            // no lower node does both jobs
            for (const auto &u : o.desc(dom))
                if (!g.is_virtual(u) && (u == n || o.below(n, u))) {
                    EXPECT_FALSE(o.common_ancestor(u, s) && o.cuts(u, n))
                        << "seed " << seed << " node " << n << " dom " << dom << " lower " << u;
                }
        }
    }
}

TEST(OwnershipGraph, ShortcutEdgeWidensDominator)
{
    // R owns A and C directly, A owns C: an event entering through R reaches C without A.
    OwnershipGraph g;
    for (const char *n : {"R", "A", "C", "L"})
        g.add_node(n, "K");
    g.add_ownership("R", "A");
    g.add_ownership("A", "C");
    g.add_ownership("R", "C");
    g.add_ownership("C", "L");
    EXPECT_EQ(g.dominator("A"), ContextId("R"));
    EXPECT_EQ(g.dominator("C"), ContextId("C"));
    EXPECT_EQ(g.dominator("L"), ContextId("L"));
}

TEST(OwnershipGraph, MovePlayerBetweenRooms)
{
    auto g = game_graph();
    g.remove_ownership("KingsRoom", "Player1");
    g.add_ownership("Armory", "Player1");
    auto real_parents = g.parents("Player1");
    std::erase_if(real_parents, [&](const ContextId &x) { return g.is_virtual(x); });
    EXPECT_EQ(real_parents, (ContextSet{"Armory"}));
    // Player1 still shares Treasure and Horse with Player2, now across rooms
    EXPECT_EQ(g.dominator("Player1"), ContextId("Castle"));
    EXPECT_EQ(g.dominator("Player3"), ContextId("Armory"));
    auto scratch = g;
    scratch.recompute_dominators();
    EXPECT_EQ(g.dominator_cache(), scratch.dominator_cache());
}

TEST(OwnershipGraph, CycleAndMissingEdgeErrors)
{
    auto g = game_graph();
    try {
        g.add_ownership("Sword", "Sword");
        FAIL() << "self-loop accepted";
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::cycle);
    }
    try {
        g.add_ownership("Treasure", "Castle");
        FAIL() << "cycle accepted";
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::cycle);
    }
    try {
        g.remove_ownership("Castle", "Sword");
        FAIL() << "missing edge removed";
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::missing_edge);
    }
    EXPECT_TRUE(g.is_acyclic());
}

TEST(OwnershipGraph, RemovingOnlyEdgeOfLeaf)
{
    OwnershipGraph g;
    g.add_node("P", "K");
    g.add_node("Q", "K");
    g.add_node("L", "K");
    g.add_ownership("P", "L");
    g.add_ownership("Q", "L");
    g.remove_ownership("Q", "L");
    g.remove_ownership("P", "L");
    EXPECT_EQ(g.dominator("L"), ContextId("L"));
    EXPECT_TRUE(g.contains("L"));
    EXPECT_TRUE(g.parents("L").empty());
}

TEST(OwnershipGraph, RandomMutationsMatchScratchRecompute)
{
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto d = random_dag(seed, 12, 18);
        auto g = build(d);
        Rng rng(seed + 1000);
        Edges live = d.edges;
        for (int step = 0; step < 12; ++step) {
            if (!live.empty() && rng.chance(40)) {
                auto i = rng.below(live.size());
                g.remove_ownership(live[i].first, live[i].second);
                live.erase(live.begin() + static_cast<long>(i));
            } else {
                auto a = d.nodes[rng.below(d.nodes.size())];
                auto b = d.nodes[rng.below(d.nodes.size())];
                if (a == b || g.reaches(b, a)) {
                    EXPECT_THROW(g.add_ownership(a, b), Error);
                } else if (!g.has_edge(a, b)) {
                    g.add_ownership(a, b);
                    live.emplace_back(a, b);
                }
            }
            EdgeOracle o(g);
            ASSERT_TRUE(o.acyclic()) << "seed " << seed << " step " << step;
            ASSERT_TRUE(g.is_acyclic());
            auto scratch = g;
            scratch.recompute_dominators();
            ASSERT_EQ(real_dominators(g), real_dominators(scratch)) << "seed " << seed << " step " << step;
            for (const auto &n : d.nodes) {
                auto dom = g.dominator(n);
                auto s = o.share(n);
                s.insert(n);
                ASSERT_TRUE(o.common_ancestor(dom, s)) << "seed " << seed << " step " << step << " node " << n;
            }
        }
    }
}

TEST(OwnershipGraph, DumpLoadRoundTrip)
{
    auto g = game_graph();
    g.lub({"Sword", "Treasure"}); // forces a virtual node into the dump
    auto text = g.dump();
    auto h = OwnershipGraph::load(text);
    EXPECT_EQ(h.dump(), text);
    EXPECT_EQ(h.edges(), g.edges());
    EXPECT_EQ(h.virtual_nodes(), g.virtual_nodes());
    EXPECT_EQ(h.dominator_cache(), g.dominator_cache());
    EXPECT_EQ(h.canonical(), g.canonical());
    EXPECT_THROW(OwnershipGraph::load("{\"parent\":\"x\"}\n"), Error);
    EXPECT_THROW(OwnershipGraph::load("not json\n"), Error);
}

TEST(OwnershipGraph, PathPrefersShortestThenLexicographic)
{
    OwnershipGraph g;
    for (const char *n : {"R", "A", "B", "C"})
        g.add_node(n, "K");
    g.add_ownership("R", "B");
    g.add_ownership("R", "A");
    g.add_ownership("A", "C");
    g.add_ownership("B", "C");
    auto p = g.path("R", "C");
    ASSERT_TRUE(p.has_value());
    EXPECT_EQ(*p, (std::vector<ContextId>{"R", "A", "C"}));
    EXPECT_FALSE(g.path("C", "R").has_value());
}

TEST(ClassDag, GameAccepted)
{
    Program p = load_program_file(aeon::testing::scenario_path("game.aeon"));
    collect_effects(p);
    EXPECT_TRUE(check_class_dag(p).accepted);
}

TEST(ClassDag, ReflexiveOwnershipAccepted)
{
    std::vector<ContextClassDecl> cs{{"A", {}, {}, {"A"}}};
    EXPECT_TRUE(check_class_dag(cs).accepted);
}

TEST(ClassDag, TwoCycleRejected)
{
    std::vector<ContextClassDecl> cs{{"A", {}, {}, {"B"}}, {"B", {}, {}, {"A"}}};
    auto r = check_class_dag(cs);
    EXPECT_FALSE(r.accepted);
    EXPECT_EQ(r.cycle, (std::vector<std::string>{"A", "B"}));
}

TEST(ClassDag, AcceptedConstraintsKeepRuntimeGraphsAcyclic)
{
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        int nc = 2 + static_cast<int>(rng.below(5));
        std::vector<ContextClassDecl> cs(static_cast<std::size_t>(nc));
        for (int i = 0; i < nc; ++i) {
            cs[i].name = "K" + std::to_string(i);
            for (int j = 0; j < nc; ++j)
                if (rng.chance(35))
                    cs[i].effect_set.insert("K" + std::to_string(j));
        }
        auto r = check_class_dag(cs);
        if (!r.accepted) {
            ASSERT_GE(r.cycle.size(), 2u);
            // each class in the witness owns the next one
            for (std::size_t k = 0; k < r.cycle.size(); ++k) {
                const auto &from = r.cycle[k];
                const auto &to = r.cycle[(k + 1) % r.cycle.size()];
                auto it = std::find_if(cs.begin(), cs.end(), [&](const auto &c) { return c.name == from; });
                ASSERT_NE(it, cs.end());
                EXPECT_TRUE(it->effect_set.count(to)) << from << " -> " << to;
            }
            continue;
        }
        // instantiate and connect anything the constraints allow, skipping same-class pairs
        OwnershipGraph g;
        std::vector<std::pair<ContextId, int>> inst;
        for (int i = 0; i < 12; ++i) {
            int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(nc)));
            ContextId id{node_name(i)};
            g.add_node(id, cs[k].name);
            inst.emplace_back(id, k);
        }
        for (const auto &[a, ka] : inst)
            for (const auto &[b, kb] : inst)
                if (ka != kb && cs[ka].effect_set.count(cs[kb].name) && rng.chance(50))
                    g.add_ownership(a, b);
        EXPECT_TRUE(EdgeOracle(g).acyclic()) << "seed " << seed;
    }
}
