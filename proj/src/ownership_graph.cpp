#include "aeon/ownership_graph.hpp"
#include "aeon/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <functional>
#include <sstream>

namespace aeon {

namespace {
const ContextSet kEmpty;

ContextSet closure(const std::map<ContextId, ContextSet> &adj, const ContextId &start)
{
    ContextSet out;
    std::vector<ContextId> stack{start};
    while (!stack.empty()) {
        ContextId cur = std::move(stack.back());
        stack.pop_back();
        auto it = adj.find(cur);
        if (it == adj.end())
            continue;
        for (const auto &n : it->second)
            if (out.insert(n).second)
                stack.push_back(n);
    }
    return out;
}

std::string virtual_name(const ContextSet &members)
{
    std::string s = "~virtual(";
    bool first = true;
    for (const auto &m : members) {
        if (!first)
            s += ",";
        s += m.value;
        first = false;
    }
    return s + ")";
}
} // namespace

void OwnershipGraph::require(const ContextId &c) const
{
    if (!contains(c))
        throw Error(ErrorKind::unknown_context, c.value);
}

void OwnershipGraph::add_node(const ContextId &id, const std::string &class_name)
{
    if (contains(id))
        throw Error(ErrorKind::duplicate, "context " + id.value);
    nodes_[id] = class_name;
    children_[id];
    parents_[id];
    dom_[id] = id;
    canonical_valid_ = false;
}

const std::string &OwnershipGraph::class_of(const ContextId &id) const
{
    auto it = nodes_.find(id);
    if (it == nodes_.end())
        throw Error(ErrorKind::unknown_context, id.value);
    return it->second;
}

std::vector<ContextId> OwnershipGraph::nodes() const
{
    std::vector<ContextId> out;
    out.reserve(nodes_.size());
    for (const auto &[id, _] : nodes_)
        out.push_back(id);
    return out;
}

std::vector<std::pair<ContextId, ContextId>> OwnershipGraph::edges() const
{
    std::vector<std::pair<ContextId, ContextId>> out;
    for (const auto &[p, cs] : children_)
        for (const auto &c : cs)
            out.emplace_back(p, c);
    return out;
}

const ContextSet &OwnershipGraph::children(const ContextId &c) const
{
    require(c);
    auto it = children_.find(c);
    return it == children_.end() ? kEmpty : it->second;
}

const ContextSet &OwnershipGraph::parents(const ContextId &c) const
{
    require(c);
    auto it = parents_.find(c);
    return it == parents_.end() ? kEmpty : it->second;
}

ContextSet OwnershipGraph::descendants(const ContextId &c) const
{
    require(c);
    return closure(children_, c);
}

ContextSet OwnershipGraph::ancestors(const ContextId &c) const
{
    require(c);
    return closure(parents_, c);
}

bool OwnershipGraph::has_edge(const ContextId &parent, const ContextId &child) const
{
    auto it = children_.find(parent);
    return it != children_.end() && it->second.count(child) != 0;
}

bool OwnershipGraph::reaches(const ContextId &from, const ContextId &to) const
{
    if (from == to)
        return true;
    return closure(children_, from).count(to) != 0;
}

ContextSet OwnershipGraph::share(const ContextId &c) const
{
    ContextSet desc = descendants(c);
    ContextSet out;
    if (desc.empty())
        return out;
    ContextSet anc = ancestors(c);
    for (const auto &d : desc) {
        for (const auto &p : parents_.at(d))
            if (!is_virtual(p))
                out.insert(p);
        for (const auto &a : closure(parents_, d)) {
            if (a == c || is_virtual(a) || anc.count(a) || desc.count(a))
                continue;
            out.insert(a);
        }
    }
    return out;
}

ContextSet OwnershipGraph::minimal_common_ancestors(const ContextSet &s) const
{
    ContextSet common;
    bool first = true;
    for (const auto &x : s) {
        ContextSet up = ancestors(x);
        up.insert(x);
        if (first) {
            common = std::move(up);
            first = false;
        } else {
            ContextSet next;
            std::set_intersection(common.begin(), common.end(), up.begin(), up.end(),
                                  std::inserter(next, next.end()));
            common = std::move(next);
        }
    }
    ContextSet minimal;
    for (const auto &u : common) {
        bool has_lower = false;
        for (const auto &d : closure(children_, u))
            if (common.count(d)) {
                has_lower = true;
                break;
            }
        if (!has_lower)
            minimal.insert(u);
    }
    return minimal;
}

std::optional<ContextId> OwnershipGraph::find_lub(const ContextSet &s) const
{
    if (s.empty())
        throw Error(ErrorKind::bad_input, "lub of empty set");
    ContextSet m = minimal_common_ancestors(s);
    if (m.size() == 1)
        return *m.begin();
    return std::nullopt;
}

ContextId OwnershipGraph::lub(const ContextSet &s)
{
    if (s.empty())
        throw Error(ErrorKind::bad_input, "lub of empty set");
    ContextSet m = minimal_common_ancestors(s);
    if (m.size() == 1)
        return *m.begin();

    ContextSet maxima = m;
    if (maxima.empty()) {
        // no common ancestor at all: own the roots above every member
        for (const auto &x : s) {
            ContextSet up = ancestors(x);
            up.insert(x);
            for (const auto &a : up)
                if (parents_.at(a).empty())
                    maxima.insert(a);
        }
    }
    if (auto it = virtual_for_.find(maxima); it != virtual_for_.end())
        return it->second;

    ContextId v{virtual_name(maxima)};
    nodes_[v] = "";
    children_[v];
    parents_[v];
    dom_[v] = v;
    virtual_nodes_.insert(v);
    virtual_for_[maxima] = v;
    for (const auto &c : maxima) {
        children_[v].insert(c);
        parents_[c].insert(v);
    }
    canonical_valid_ = false;
    return v;
}

const ContextId &OwnershipGraph::dominator(const ContextId &c) const
{
    auto it = dom_.find(c);
    if (it == dom_.end())
        throw Error(ErrorKind::unknown_context, c.value);
    return it->second;
}

ContextSet OwnershipGraph::bypass_entries(const ContextId &d, const ContextId &n) const
{
    ContextSet reached;
    std::vector<ContextId> stack;
    // entry points: real nodes without real parents
    for (const auto &[id, ps] : parents_) {
        if (id == d || is_virtual(id))
            continue;
        if (std::all_of(ps.begin(), ps.end(), [&](const ContextId &p) { return is_virtual(p); }) &&
            reached.insert(id).second)
            stack.push_back(id);
    }
    while (!stack.empty()) {
        ContextId cur = std::move(stack.back());
        stack.pop_back();
        for (const auto &c : children_.at(cur))
            if (c != d && reached.insert(c).second)
                stack.push_back(c);
    }
    ContextSet bad = closure(children_, n);
    bad.insert(n);
    std::erase_if(bad, [&](const ContextId &x) { return x == d || !reached.count(x); });
    if (bad.empty())
        return {};
    ContextSet under = closure(children_, d);
    ContextSet leads; // nodes of d's subtree on a path to a bypassed node
    for (const auto &x : bad) {
        leads.insert(x);
        for (const auto &a : closure(parents_, x))
            if (under.count(a))
                leads.insert(a);
    }
    ContextSet entries;
    for (const auto &z : leads)
        for (const auto &y : parents_.at(z))
            if (y != d && !under.count(y) && reached.count(y))
                entries.insert(y);
    return entries;
}

bool OwnershipGraph::recompute_for(const ContextSet &targets)
{
    std::size_t before = virtual_nodes_.size();
    for (const auto &n : targets) {
        if (!contains(n))
            continue;
        ContextSet s = share(n);
        s.insert(n);
        ContextId d = lub(s);
        // widen until every path into n's subtree passes through d
        for (ContextSet entries = bypass_entries(d, n); !entries.empty(); entries = bypass_entries(d, n)) {
            s.insert(entries.begin(), entries.end());
            d = lub(s);
        }
        dom_[n] = d;
    }
    return virtual_nodes_.size() != before;
}

void OwnershipGraph::recompute_dominators()
{
    for (int round = 0; round < 64; ++round) {
        ContextSet all;
        for (const auto &[id, _] : nodes_)
            all.insert(id);
        last_recompute_size_ = all.size();
        if (!recompute_for(all))
            return;
    }
    throw Error(ErrorKind::protocol_violation, "virtual ancestor synthesis did not converge");
}

ContextSet OwnershipGraph::affected_by(const ContextId &child) const
{
    ContextSet seeds = closure(children_, child);
    seeds.insert(child);
    ContextSet out;
    for (const auto &s : seeds) {
        out.insert(s);
        for (const auto &a : closure(parents_, s))
            out.insert(a);
    }
    for (const auto &[n, d] : dom_)
        if (out.count(d))
            out.insert(n);
    return out;
}

void OwnershipGraph::add_ownership(const ContextId &parent, const ContextId &child)
{
    require(parent);
    require(child);
    if (parent == child || reaches(child, parent))
        throw Error(ErrorKind::cycle, parent.value + " -> " + child.value);
    if (has_edge(parent, child))
        return;
    ContextSet affected = affected_by(child);
    children_[parent].insert(child);
    parents_[child].insert(parent);
    canonical_valid_ = false;
    for (const auto &n : affected_by(child))
        affected.insert(n);
    if (nodes_.size() > kFullRecomputeThreshold || recompute_for(affected))
        recompute_dominators();
    else
        last_recompute_size_ = affected.size();
}

void OwnershipGraph::remove_ownership(const ContextId &parent, const ContextId &child)
{
    require(parent);
    require(child);
    if (!has_edge(parent, child))
        throw Error(ErrorKind::missing_edge, parent.value + " -> " + child.value);
    ContextSet affected = affected_by(child);
    children_[parent].erase(child);
    parents_[child].erase(parent);
    canonical_valid_ = false;
    for (const auto &n : affected_by(child))
        affected.insert(n);
    if (nodes_.size() > kFullRecomputeThreshold || recompute_for(affected))
        recompute_dominators();
    else
        last_recompute_size_ = affected.size();
}

std::optional<std::vector<ContextId>> OwnershipGraph::path(const ContextId &from, const ContextId &to) const
{
    require(from);
    require(to);
    // BFS from `to` upwards gives distances; then walk down greedily picking the
    // smallest child that is one step closer.
    std::map<ContextId, int> dist;
    std::deque<ContextId> q{to};
    dist[to] = 0;
    while (!q.empty()) {
        ContextId cur = q.front();
        q.pop_front();
        for (const auto &p : parents_.at(cur))
            if (!dist.count(p)) {
                dist[p] = dist[cur] + 1;
                q.push_back(p);
            }
    }
    if (!dist.count(from))
        return std::nullopt;
    std::vector<ContextId> out{from};
    ContextId cur = from;
    while (cur != to) {
        int want = dist[cur] - 1;
        for (const auto &c : children_.at(cur)) {
            auto it = dist.find(c);
            if (it != dist.end() && it->second == want) {
                cur = c;
                break;
            }
        }
        out.push_back(cur);
    }
    return out;
}

bool OwnershipGraph::is_acyclic() const
{
    std::map<ContextId, int> color;
    std::function<bool(const ContextId &)> visit = [&](const ContextId &n) {
        color[n] = 1;
        for (const auto &c : children_.at(n)) {
            int k = color[c];
            if (k == 1)
                return false;
            if (k == 0 && !visit(c))
                return false;
        }
        color[n] = 2;
        return true;
    };
    for (const auto &[id, _] : nodes_)
        if (color[id] == 0 && !visit(id))
            return false;
    return true;
}

std::string OwnershipGraph::dump() const
{
    std::ostringstream os;
    for (const auto &[id, cls] : nodes_) {
        nlohmann::ordered_json j;
        j["id"] = id.value;
        j["class"] = cls;
        if (is_virtual(id))
            j["virtual"] = true;
        os << j.dump() << "\n";
    }
    for (const auto &[p, c] : edges()) {
        nlohmann::ordered_json j;
        j["parent"] = p.value;
        j["child"] = c.value;
        os << j.dump() << "\n";
    }
    return os.str();
}

OwnershipGraph OwnershipGraph::load(const std::string &text)
{
    OwnershipGraph g;
    std::istringstream is(text);
    std::string line;
    std::vector<std::pair<ContextId, ContextId>> edges;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            if (j.contains("id")) {
                ContextId id{j.at("id").get<std::string>()};
                g.add_node(id, j.value("class", std::string{}));
                if (j.value("virtual", false))
                    g.virtual_nodes_.insert(id);
            } else if (j.contains("parent")) {
                edges.emplace_back(j.at("parent").get<std::string>(), j.at("child").get<std::string>());
            } else {
                throw Error(ErrorKind::bad_input, "graph dump line " + std::to_string(lineno));
            }
        } catch (const nlohmann::json::exception &e) {
            throw Error(ErrorKind::bad_input, "graph dump line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    for (const auto &[p, c] : edges) {
        g.require(p);
        g.require(c);
        if (p == c || g.reaches(c, p))
            throw Error(ErrorKind::cycle, p.value + " -> " + c.value);
        g.children_[p].insert(c);
        g.parents_[c].insert(p);
    }
    for (const auto &v : g.virtual_nodes_) {
        ContextSet members = g.children_[v];
        g.virtual_for_[members] = v;
    }
    g.recompute_dominators();
    return g;
}

const std::string &OwnershipGraph::canonical() const
{
    if (!canonical_valid_) {
        std::string s;
        for (const auto &[p, cs] : children_) {
            if (is_virtual(p))
                continue;
            for (const auto &c : cs) {
                s += p.value;
                s += '>';
                s += c.value;
                s += ';';
            }
        }
        canonical_ = std::move(s);
        canonical_valid_ = true;
    }
    return canonical_;
}

ClassDagResult check_class_dag(std::span<const ContextClassDecl> classes)
{
    std::map<std::string, std::set<std::string>> owns;
    for (const auto &c : classes) {
        auto &out = owns[c.name];
        for (const auto &e : c.effect_set)
            if (e != c.name)
                out.insert(e);
    }
    std::map<std::string, int> color;
    std::vector<std::string> stack;
    ClassDagResult result;
    std::function<bool(const std::string &)> visit = [&](const std::string &n) {
        color[n] = 1;
        stack.push_back(n);
        for (const auto &m : owns[n]) {
            int k = color[m];
            if (k == 1) {
                auto it = std::find(stack.begin(), stack.end(), m);
                result.accepted = false;
                result.cycle.assign(it, stack.end());
                return false;
            }
            if (k == 0 && !visit(m))
                return false;
        }
        stack.pop_back();
        color[n] = 2;
        return true;
    };
    std::vector<std::string> names;
    for (const auto &[n, _] : owns)
        names.push_back(n);
    for (const auto &n : names)
        if (color[n] == 0 && !visit(n))
            break;
    return result;
}

} // namespace aeon
