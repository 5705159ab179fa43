#pragma once

#include "aeon/engine.hpp"

#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace aeon {

struct DeadlockWitness {
    // eid_i is active at ctx_i and waits in the queue of ctx_{i+1 mod n}
    std::vector<std::pair<ContextId, EventId>> cycle;
    std::string str() const;
};

// Cycles in the holds/waits relation where each wait is blocked by the next event.
std::optional<DeadlockWitness> detect_deadlock(const GlobalConfig &cfg);

struct LinearResult {
    std::map<ContextId, Digest> stores;
    Digest digest;
    std::vector<EventInfo> finished;
    GlobalConfig final;
};

// One event at a time, nested dispatches suppressed, first enabled choice each step.
LinearResult linear_execute(std::shared_ptr<const Program> program, const std::vector<ScriptEntry> &events);

struct LinearOutcomes {
    std::set<Digest> digests;
    bool complete = true; // false if the bound cut the search
};

// Store digests of every schedule of the linear semantics over the given order.
LinearOutcomes linear_outcomes(std::shared_ptr<const Program> program, const std::vector<ScriptEntry> &events,
                               std::size_t max_configs = 100'000);

// Memo of linear outcomes keyed by the replayed order.
class OracleCache {
  public:
    explicit OracleCache(std::shared_ptr<const Program> program) : program_(std::move(program)) {}
    const LinearOutcomes &outcomes(const std::vector<ScriptEntry> &events);
    std::size_t size() const { return cache_.size(); }

  private:
    std::shared_ptr<const Program> program_;
    std::unordered_map<std::string, LinearOutcomes> cache_;
};

struct Violation {
    std::string kind; // deadlock, stuck, serializability, realtime, invariant
    std::string message;
    std::vector<TraceEntry> trace;
    std::vector<EventId> commit_order;
    std::optional<Digest> oracle;
    std::optional<Digest> actual;
};

// commit_tick(a) < issue_tick(b) must put a before b; history is in commit order.
std::vector<std::string> check_realtime(const std::vector<EventInfo> &history);

// Terminal stores against the linear oracle over the commit order, plus real-time order.
// A miss against a truncated oracle comes back with kind "oracle_truncated".
std::optional<Violation> check_serializability(const GlobalConfig &terminal, OracleCache &oracle);

struct ExploreOptions {
    std::size_t max_configs = 200'000;
    std::size_t max_depth = 64;
    EngineOptions engine;
    bool serializability = true;
    bool invariants = true;
    std::size_t max_reported = 8; // per violation kind
    std::function<std::vector<std::string>(const GlobalConfig &)> invariant;
    std::function<void(const GlobalConfig &)> on_config;
};

struct ExplorationReport {
    std::size_t configs_visited = 0;
    std::size_t transitions = 0;
    std::size_t terminal_configs = 0;
    std::size_t max_depth_seen = 0;
    std::set<Digest> terminal_states;
    std::vector<std::pair<DeadlockWitness, std::vector<TraceEntry>>> deadlocks;
    std::vector<Violation> stuck;
    std::vector<Violation> serializability_violations;
    std::vector<Violation> realtime_violations;
    std::vector<Violation> invariant_violations;
    std::size_t violation_count = 0;
    std::size_t oracle_truncated = 0; // terminals the bounded oracle could not decide
    bool bound_exhausted = false;

    enum Verdict { pass, violation, inconclusive };
    Verdict verdict() const;
    int exit_code() const; // 0, 2, 3
};

const char *to_string(ExplorationReport::Verdict v);

ExplorationReport explore(std::shared_ptr<const Program> program, const ExploreOptions &options = {},
                          std::optional<std::vector<ScriptEntry>> events = std::nullopt);

std::string report_text(const ExplorationReport &r);
nlohmann::json report_json(const ExplorationReport &r);

struct CommutativityResult {
    enum Status { pass, counterexample, not_independent, inconclusive };
    Status status = pass;
    std::set<Digest> terminal_states;
    std::string message;
};

const char *to_string(CommutativityResult::Status s);

CommutativityResult check_commutativity(std::shared_ptr<const Program> program, const ScriptEntry &e0,
                                        const ScriptEntry &e1, std::size_t max_configs = 200'000);

} // namespace aeon
