#pragma once

#include "aeon/ast.hpp"
#include "aeon/digest.hpp"
#include "aeon/interp.hpp"
#include "aeon/ownership_graph.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace aeon {

enum class Decorator { synch, asynch, event };

const char *to_string(Decorator d);

struct Request {
    EventId eid;
    std::string method;
    std::vector<Value> args;
    Decorator decorator = Decorator::synch;
    AccessMode am = AccessMode::ex;
    bool lub_marker = false;
    ContextId target;       // lub markers: where the event is forwarded
    ContextId reply_to;     // synch calls: the caller's context
    std::uint64_t seq = 0;  // unique per config lineage; not part of digests
};

struct Activation {
    EventId eid;
    AccessMode am = AccessMode::ex;
    bool running = false; // false: the lock placeholder form
    Decorator decorator = Decorator::synch;
    ContextId reply_to;
    std::vector<Env> lenv;
    Code code;
};

struct ContextInstance {
    ContextId id;
    std::string class_name;
    bool is_virtual = false;
    std::vector<Request> queue;
    Store store;
    Env genv;
    std::vector<Activation> activations;

    bool holds(const EventId &e) const;
    bool has_placeholder(const EventId &e) const;
    bool has_ex_other_than(const EventId &e) const;
    bool only_event(const EventId &e) const;
    bool has_ex() const;
};

enum class EventKind { client, nested, snapshot, migrate };

const char *to_string(EventKind k);

struct EventInfo {
    EventId eid;
    EventKind kind = EventKind::client;
    ContextId target;
    std::string method;
    std::vector<Value> args;
    AccessMode am = AccessMode::ex;
    ContextId dominator;
    std::uint64_t issue_tick = 0;
    std::optional<std::uint64_t> commit_tick;
    std::size_t commits_before_issue = 0;
    bool entry_returned = false;
    bool failed = false;
    std::string failure;
    Value result;
    std::optional<EventId> parent;
    // early start of events whose dominator is busy
    bool marker_admitted = false;
    bool early_started = false;
    std::set<EventId> waiting_on;
};

struct PendingDispatch {
    ContextId target;
    std::string method;
    std::vector<Value> args;
};

struct SnapshotRecord {
    EventId eid;
    ContextId root;
    std::map<ContextId, Store> stores;
};

struct EngineOptions {
    bool dominator_sequencing = true; // false only as a checker-sensitivity hook
    bool opt_unshared_start = false;
    bool suppress_nested = false;     // nested dispatches dropped (linear oracle replays them explicitly)
    bool linear = false;              // at most one live event
    bool track_touched = false;
    bool record_trace = true;
};

struct TransitionChoice {
    enum Kind { dispatch, activate, promote, lift, auto_lock, commit, early_start };
    Kind kind = dispatch;
    ContextId ctx;
    EventId eid;
    std::size_t index = 0;

    bool operator==(const TransitionChoice &) const = default;
    std::string str() const;
};

const char *to_string(TransitionChoice::Kind k);
std::optional<TransitionChoice::Kind> choice_kind_from_string(const std::string &s);

struct TraceEntry {
    std::uint64_t step = 0;
    std::string rule;
    ContextId ctx;
    EventId eid;
    std::string detail;
    TransitionChoice choice;
};

struct TraceNode {
    TraceEntry entry;
    std::shared_ptr<const TraceNode> prev;
};
using TraceList = std::shared_ptr<const TraceNode>;

std::vector<TraceEntry> trace_entries(const TraceList &t);

struct GlobalConfig {
    std::shared_ptr<const Program> program;
    std::shared_ptr<const OwnershipGraph> graph;
    std::shared_ptr<const std::vector<ScriptEntry>> script;
    EngineOptions options;

    std::map<ContextId, ContextInstance> contexts;
    std::map<EventId, EventInfo> events; // live events
    std::vector<EventInfo> finished;     // committed or failed, in commit order
    std::map<EventId, std::vector<PendingDispatch>> pending_nested;
    std::map<EventId, std::set<ContextId>> touched;
    std::map<EventId, SnapshotRecord> snapshots;
    std::size_t next_script = 0;
    std::uint64_t next_eid = 1;
    std::uint64_t clock = 0;
    std::uint64_t next_seq = 1;
    std::uint64_t steps = 0;
    TraceList trace;
    std::optional<TransitionChoice> applying; // set while apply runs; stamps its trace entries

    const ContextInstance &ctx(const ContextId &id) const;
    ContextInstance &ctx(const ContextId &id);
    const EventInfo *find_event(const EventId &e) const;
};

GlobalConfig initial_config(std::shared_ptr<const Program> program, EngineOptions options = {},
                            std::optional<std::vector<ScriptEntry>> script = std::nullopt);

// Rule-level operations, in place.
EventId dispatch_event(GlobalConfig &cfg, const ContextId &target, const std::string &method,
                       const std::vector<Value> &args, EventKind kind = EventKind::client,
                       std::optional<EventId> parent = std::nullopt);
EventId dispatch_snapshot(GlobalConfig &cfg, const ContextId &root);
// Enqueued straight at ctx, no dominator; used for migration.
EventId dispatch_system_event(GlobalConfig &cfg, const ContextId &ctx);

bool head_admissible(const GlobalConfig &cfg, const ContextId &ctx);
bool activate_head(GlobalConfig &cfg, const ContextId &ctx);
void lift_intra(GlobalConfig &cfg, const ContextId &ctx, std::size_t activation);
void handle_sync_call(GlobalConfig &cfg, const ContextId &caller, const EventId &eid, const Label &label);
void handle_async_call(GlobalConfig &cfg, const ContextId &caller, std::size_t activation, const Label &label);
void handle_sync_return(GlobalConfig &cfg, const ContextId &callee, std::size_t activation, const Value &v);
void handle_async_return(GlobalConfig &cfg, const ContextId &ctx, std::size_t activation);
bool commit_eligible(const GlobalConfig &cfg, const EventId &eid);
void commit_event(GlobalConfig &cfg, const EventId &eid);
void abort_event(GlobalConfig &cfg, const EventId &eid, const std::string &reason);
// Locks every intermediate of the path that is admissible, top-down; returns false if
// it stalled before reaching `to`.
bool auto_lock_path(GlobalConfig &cfg, const EventId &eid, const ContextId &from, const ContextId &to);

std::vector<TransitionChoice> enabled_transitions(const GlobalConfig &cfg);
void apply_in_place(GlobalConfig &cfg, const TransitionChoice &choice);
GlobalConfig apply(const GlobalConfig &cfg, const TransitionChoice &choice);
// Skips the enabledness check; only for choices taken from enabled_transitions(cfg).
void apply_trusted(GlobalConfig &cfg, const TransitionChoice &choice);

// True when nothing is live, queued or left in the script.
bool is_quiescent(const GlobalConfig &cfg);

struct RunResult {
    GlobalConfig final;
    std::vector<TraceEntry> trace;
    bool completed = false; // quiescent at the end
};

RunResult run_to_completion(GlobalConfig cfg, std::uint64_t policy_seed, std::size_t max_steps = 1'000'000);

// Full canonical state (history-free except commit order and real-time relation).
std::string config_text(const GlobalConfig &cfg);
Digest config_digest(const GlobalConfig &cfg);
// Stores of non-virtual contexts plus ownership edges.
std::string store_text(const GlobalConfig &cfg);
Digest store_digest(const GlobalConfig &cfg);

// Lock-shape, dominator-lock and path-lock invariants; empty when all hold.
std::vector<std::string> check_invariants(const GlobalConfig &cfg);

// Script entry that re-runs a finished event in a linear oracle.
std::optional<ScriptEntry> replay_entry(const EventInfo &e);

} // namespace aeon
