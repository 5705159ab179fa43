#pragma once

#include "aeon/engine.hpp"

#include <cstdint>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace aeon {

using ServerId = int;
using Tick = std::int64_t;

struct LatencyModel {
    Tick base = 1;   // server to server
    Tick em = 1;     // any node to the eManager
    Tick client = 1; // client to server
    Tick jitter = 0; // uniform extra in [0, jitter] on server links
    std::map<std::pair<ServerId, ServerId>, Tick> links;

    Tick link(ServerId a, ServerId b) const;
};

struct TargetSpec {
    std::optional<ContextId> ctx;
    std::string class_name; // every instance of the class when ctx is unset
    std::string method;
    std::vector<Value> args;
    double weight = 1.0;
};

struct RateProfile {
    enum Shape { constant, triangle };
    Shape shape = constant;
    double rate = 1.0; // constant
    double low = 0.0, high = 0.0;
    Tick period = 100; // triangle: low at 0, high at period/2, low at period
    Tick start = 0;

    double at(Tick t) const;
    bool rising(Tick t) const;
};

struct WorkloadSpec {
    enum Kind { open, closed };
    Kind kind = open;
    RateProfile profile;
    int clients = 1;
    Tick think = 0;
    std::int64_t max_events = -1; // unlimited
    Tick stop_at = -1;            // no new events from here on
    std::vector<TargetSpec> targets;
};

struct PolicySpec {
    enum Kind { none, server_contention, resource_utilization };
    Kind kind = none;
    int max_contexts = 4;
    double scale_in_fraction = 0.75; // contention scale-in band
    double lower = 0.2, upper = 0.8, threshold = 0.05;
    Tick window = 20;
};

struct PlacementSpec {
    enum Mode { colocate, round_robin };
    Mode mode = colocate;
    std::set<std::string> spread; // classes placed round-robin under colocate
    std::map<ContextId, ServerId> fixed;
};

struct MigrationRequest {
    ContextId ctx;
    ServerId to = 0;
    Tick at = 0;
};

struct Scenario {
    std::string name = "scenario";
    std::shared_ptr<const Program> program;
    std::string program_path;
    int servers = 1;
    int min_servers = 1;
    int max_servers = 64;
    int capacity = 4; // lifts per server per tick
    LatencyModel latency;
    PlacementSpec placement;
    WorkloadSpec workload;
    PolicySpec policy;
    std::vector<MigrationRequest> migrations;
    Tick delta = 0;
    std::int64_t state_bytes = 64;
    std::int64_t bandwidth = 64; // bytes per tick
    std::uint64_t seed = 1;
    Tick until = 200;
    bool dominator_sequencing = true;
};

// Relative program paths resolve against base_dir. Throws bad_input.
Scenario scenario_from_json(const nlohmann::json &j, const std::string &base_dir = ".");
Scenario load_scenario_file(const std::string &path);
nlohmann::json scenario_to_json(const Scenario &s);

enum class MigrationPhase { prepare = 1, stop, remap, transfer, done };
const char *to_string(MigrationPhase p);

struct ClientRequest {
    std::uint64_t id = 0;
    int client = 0;
    ContextId target;
    std::string method;
    std::vector<Value> args;
    Tick issued = 0;
    int hops = 0;
    int retries = 0;
    int forwards = 0;
    int em_lookups = 0;
    std::optional<EventId> eid;
    ServerId accepted_by = -1;
    Tick accepted = -1;
    enum Status { in_flight, deferred, running, completed, failed };
    Status status = in_flight;
    Tick done = -1;
    int completions = 0; // ledger: must end at exactly one
};

struct MigrationRecord {
    ContextId ctx;
    ServerId src = 0, dst = 0;
    MigrationPhase phase = MigrationPhase::prepare;
    Tick started = 0;
    Tick prepared = -1;   // dst defers from here
    Tick stopped = -1;    // src rejects from here
    Tick flipped = -1;    // eManager map points at dst
    Tick src_learned = -1;
    Tick drained = -1;    // migrate event committed; transfer begins
    Tick done = -1;
    Tick transfer_ticks = 0;
    std::optional<EventId> migrate_eid;
    std::vector<std::uint64_t> deferred; // client requests held at dst
    std::size_t rejected = 0;
    std::string reason;

    Tick unavailable_window() const { return flipped >= 0 && stopped >= 0 ? flipped - stopped : -1; }
};

struct ServerState {
    ServerId id = 0;
    bool alive = true;
    bool draining = false;
    std::set<ContextId> hosted;
    std::map<ContextId, ServerId> cache;
    std::int64_t work_window = 0;
    std::int64_t work_total = 0;
    std::map<ContextId, std::int64_t> active_window; // lifts per hosted context this window
};

struct DeliveryPlan {
    enum Kind { direct, forward, emanager, reject, defer };
    Kind kind = direct;
    std::vector<ServerId> path; // servers the request visits, in order
    bool notify_client = false;
};

const char *to_string(DeliveryPlan::Kind k);

struct MetricsReport {
    std::string scenario;
    std::uint64_t seed = 0;
    Tick until = 0;
    std::vector<std::int64_t> completed_per_tick;
    std::vector<std::int64_t> issued_per_tick;
    std::vector<int> servers_per_tick;
    std::vector<double> offered_rate;
    std::int64_t issued = 0, completed = 0, failed = 0, pending = 0;
    std::int64_t duplicates = 0; // requests completed more than once
    std::int64_t rejected = 0, forwarded = 0, em_lookups = 0, retries = 0;
    double latency_mean = 0, latency_p50 = 0, latency_p90 = 0, latency_p99 = 0;
    std::vector<MigrationRecord> migrations;
    std::vector<ClientRequest> ledger;

    double throughput(Tick from = 0, Tick to = -1) const; // completions per tick
    nlohmann::json summary_json() const;
    std::vector<std::string> records() const; // JSON lines: ticks, migrations, summary
    std::string csv() const;
};

class ClusterSim {
  public:
    explicit ClusterSim(const Scenario &scenario);

    Tick now() const { return now_; }
    const GlobalConfig &engine() const { return cfg_; }
    const std::map<ServerId, ServerState> &servers() const { return servers_; }
    const std::map<ContextId, ServerId> &authoritative_map() const { return map_; }
    const std::map<ContextId, MigrationRecord> &migrations_in_flight() const { return in_flight_; }
    const std::vector<MigrationRecord> &migration_log() const { return log_; }
    std::map<ContextId, ServerId> &client_cache(int client) { return client_cache_[client]; }
    ServerState &server(ServerId s) { return servers_.at(s); }
    int server_count() const;
    ServerId host(const ContextId &ctx) const;

    // Route a request for ctx as it would be routed right now, starting at the client's cached server.
    DeliveryPlan route_event(int client, const ContextId &target) const;

    // Issues a client request now; returns its ledger id.
    std::uint64_t submit(int client, const ContextId &target, const std::string &method,
                         const std::vector<Value> &args);
    // Starts the five-phase protocol. Throws migration_in_flight.
    void migrate(const ContextId &ctx, ServerId dst);
    // Evaluates the policy; returns the (ctx, src, dst) moves it started.
    std::vector<std::tuple<ContextId, ServerId, ServerId>> policy_step();
    ServerId add_server();

    void step(); // one tick
    void run_until(Tick t);
    bool quiescent() const;

    // Issued as an ordinary event; runs ticks until it commits.
    SnapshotRecord snapshot(const ContextId &ctx, Tick max_ticks = 10'000);

    const std::map<std::uint64_t, ClientRequest> &ledger() const { return requests_; }
    MetricsReport metrics() const;

  private:
    struct Message {
        enum Kind { arrive, retry, mig_prepare, mig_stop, mig_flip, mig_src_learns, mig_done };
        Kind kind = arrive;
        std::uint64_t req = 0;
        ServerId server = 0;
        ContextId ctx;
    };

    Scenario sc_;
    std::mt19937_64 rng_;
    GlobalConfig cfg_;
    Tick now_ = 0;
    std::map<ServerId, ServerState> servers_;
    std::map<ContextId, ServerId> map_;
    std::map<int, std::map<ContextId, ServerId>> client_cache_;
    std::multimap<std::pair<Tick, std::uint64_t>, Message> inbox_;
    std::uint64_t msg_seq_ = 0;
    std::map<std::uint64_t, ClientRequest> requests_;
    std::uint64_t next_req_ = 1;
    std::map<EventId, std::uint64_t> eid_to_req_;
    std::map<ContextId, MigrationRecord> in_flight_;
    std::vector<MigrationRecord> log_;
    std::map<ContextId, Tick> last_moved_;
    std::set<ContextId> frozen_;
    std::map<std::uint64_t, Tick> available_at_; // request seq -> arrival tick
    std::map<std::pair<ContextId, EventId>, Tick> resume_at_;
    std::size_t finished_seen_ = 0;
    std::vector<std::int64_t> completed_series_, issued_series_;
    std::vector<int> server_series_;
    std::vector<double> rate_series_;
    double open_carry_ = 0;
    std::int64_t issued_count_ = 0;
    std::map<int, Tick> closed_next_; // closed clients: next issue tick (absent = waiting)
    std::vector<std::pair<ContextId, double>> targets_;
    std::vector<std::pair<std::string, std::vector<Value>>> target_calls_;
    std::int64_t rejected_ = 0, forwarded_ = 0, em_lookups_ = 0, retries_ = 0;
    Tick last_policy_ = 0;

    void send(Tick at, Message m);
    void place_initial();
    void deliver(const Message &m);
    void arrive(std::uint64_t req, ServerId s);
    void accept(std::uint64_t req, ServerId s);
    void generate_workload();
    void schedule_engine();
    void after_apply(std::uint64_t seq_before, ServerId origin);
    void harvest_finished();
    void start_transfer(MigrationRecord &m);
    bool choice_allowed(const TransitionChoice &ch, std::map<ServerId, int> &budget);
    Tick net(ServerId a, ServerId b);
};

MetricsReport run_sim(const Scenario &scenario, std::optional<Tick> until = std::nullopt);

// Serializability of a finished simulation: the final stores lie in the linear oracle's
// outcome set for the commit order, and commit/issue ticks respect real time.
struct SimSerializability {
    bool pass = false;
    std::string message;
};
SimSerializability check_sim_serializability(const ClusterSim &sim);

} // namespace aeon
