#pragma once

#include "aeon/ids.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace aeon {

struct FieldDecl {
    std::string name;
    SemType type;
};

struct ContextClassDecl {
    std::string name;
    std::vector<FieldDecl> field_types;
    std::vector<std::string> methods;
    std::set<std::string> effect_set;
};

struct ClassDagResult {
    bool accepted = true;
    std::vector<std::string> cycle; // classes in cycle order when rejected
};

// Accepts iff the constraint graph (cx1 <= cx0 for every cx1 in effect_set(cx0)) is
// acyclic once self-edges are dropped.
ClassDagResult check_class_dag(std::span<const ContextClassDecl> classes);

using ContextSet = std::set<ContextId>;

class OwnershipGraph {
public:
    static constexpr std::size_t kFullRecomputeThreshold = 256;

    void add_node(const ContextId &id, const std::string &class_name);
    bool contains(const ContextId &id) const { return nodes_.count(id) != 0; }
    const std::string &class_of(const ContextId &id) const;
    bool is_virtual(const ContextId &id) const { return virtual_nodes_.count(id) != 0; }

    std::vector<ContextId> nodes() const;
    std::vector<std::pair<ContextId, ContextId>> edges() const;
    std::size_t size() const { return nodes_.size(); }
    const ContextSet &virtual_nodes() const { return virtual_nodes_; }

    const ContextSet &children(const ContextId &c) const;
    const ContextSet &parents(const ContextId &c) const;
    ContextSet descendants(const ContextId &c) const;
    ContextSet ancestors(const ContextId &c) const;
    ContextSet share(const ContextId &c) const;
    bool has_edge(const ContextId &parent, const ContextId &child) const;
    bool reaches(const ContextId &from, const ContextId &to) const;

    // Unique minimal common ancestor; synthesizes a memoized virtual ancestor when
    // the minimum is not unique.
    ContextId lub(const ContextSet &s);
    // Same as lub but never synthesizes; nullopt when a virtual node would be needed.
    std::optional<ContextId> find_lub(const ContextSet &s) const;

    const ContextId &dominator(const ContextId &c) const;
    const std::map<ContextId, ContextId> &dominator_cache() const { return dom_; }

    void add_ownership(const ContextId &parent, const ContextId &child);
    void remove_ownership(const ContextId &parent, const ContextId &child);
    void recompute_dominators();

    // Shortest parent->child path from `from` to `to`, lexicographically smallest among
    // the shortest. Includes both endpoints.
    std::optional<std::vector<ContextId>> path(const ContextId &from, const ContextId &to) const;

    bool is_acyclic() const;

    std::string dump() const;
    static OwnershipGraph load(const std::string &text);
    // Canonical text of the non-virtual structure, used in config digests.
    const std::string &canonical() const;

    std::size_t last_recompute_size() const { return last_recompute_size_; }

private:
    void require(const ContextId &c) const;
    ContextSet minimal_common_ancestors(const ContextSet &s) const;
    ContextSet affected_by(const ContextId &child) const;
    // Parents outside d's subtree through which a path reaches n's subtree without d.
    ContextSet bypass_entries(const ContextId &d, const ContextId &n) const;
    bool recompute_for(const ContextSet &nodes);

    std::map<ContextId, std::string> nodes_;
    std::map<ContextId, ContextSet> children_;
    std::map<ContextId, ContextSet> parents_;
    std::map<ContextId, ContextId> dom_;
    ContextSet virtual_nodes_;
    std::map<ContextSet, ContextId> virtual_for_;
    std::size_t last_recompute_size_ = 0;
    mutable std::string canonical_;
    mutable bool canonical_valid_ = false;
};

} // namespace aeon
