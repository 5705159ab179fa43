#include "aeon/cluster_sim.hpp"
#include "aeon/error.hpp"
#include "aeon/parser.hpp"
#include "aeon/static_checks.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace aeon {

using nlohmann::json;

namespace {

Value value_from_json(const json &j)
{
    if (j.is_null())
        return Value(Unit{});
    if (j.is_boolean())
        return Value(j.get<bool>());
    if (j.is_number_integer())
        return Value(j.get<std::int64_t>());
    if (j.is_string()) {
        auto s = j.get<std::string>();
        if (s.size() > 1 && s[0] == '#')
            return Value(ContextId{s.substr(1)});
        throw Error(ErrorKind::bad_input, "string argument must name a context as #Id: " + s);
    }
    if (j.is_object()) {
        auto r = std::make_shared<Record>();
        for (const auto &[k, v] : j.items())
            r->fields[k] = value_from_json(v);
        return Value(RecordPtr(std::move(r)));
    }
    throw Error(ErrorKind::bad_input, "unsupported argument " + j.dump());
}

json value_to_json(const Value &v)
{
    if (v.is_int())
        return v.as_int();
    if (v.is_bool())
        return v.as_bool();
    if (v.is_context())
        return "#" + v.as_context().value;
    if (v.is_record()) {
        json o = json::object();
        for (const auto &[k, f] : v.as_record().fields)
            o[k] = value_to_json(f);
        return o;
    }
    return nullptr;
}

std::shared_ptr<const Program> checked_program(Program p)
{
    CheckResult r = check_all(p);
    if (!r.accepted) {
        std::string msg = "program rejected:";
        for (const auto &d : r.diagnostics)
            msg += "\n  " + d.str();
        throw Error(ErrorKind::bad_input, msg);
    }
    return std::make_shared<const Program>(std::move(p));
}

template <class T>
T get_or(const json &j, const char *key, T fallback)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
        return fallback;
    return it->get<T>();
}

} // namespace

Scenario scenario_from_json(const json &j, const std::string &base_dir)
{
    Scenario s;
    try {
        s.name = get_or<std::string>(j, "name", s.name);
        if (j.contains("program")) {
            std::filesystem::path p = j.at("program").get<std::string>();
            if (p.is_relative())
                p = std::filesystem::path(base_dir) / p;
            s.program_path = p.string();
            s.program = checked_program(load_program_file(s.program_path));
        } else if (j.contains("program_text")) {
            s.program = checked_program(parse_program(j.at("program_text").get<std::string>(), s.name));
        } else {
            throw Error(ErrorKind::bad_input, "scenario needs program or program_text");
        }
        s.servers = get_or(j, "servers", s.servers);
        s.min_servers = get_or(j, "min_servers", s.min_servers);
        s.max_servers = get_or(j, "max_servers", s.max_servers);
        s.capacity = get_or(j, "capacity", s.capacity);
        s.delta = get_or<Tick>(j, "delta", s.delta);
        s.state_bytes = get_or<std::int64_t>(j, "state_bytes", s.state_bytes);
        s.bandwidth = get_or<std::int64_t>(j, "bandwidth", s.bandwidth);
        s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
        s.until = get_or<Tick>(j, "until", s.until);
        s.dominator_sequencing = get_or(j, "dominator_sequencing", true);

        if (j.contains("latency")) {
            const json &l = j.at("latency");
            s.latency.base = get_or<Tick>(l, "default", s.latency.base);
            s.latency.em = get_or<Tick>(l, "em", s.latency.em);
            s.latency.client = get_or<Tick>(l, "client", s.latency.client);
            s.latency.jitter = get_or<Tick>(l, "jitter", s.latency.jitter);
            if (l.contains("links"))
                for (const auto &e : l.at("links")) {
                    ServerId a = e.at(0).get<int>(), b = e.at(1).get<int>();
                    s.latency.links[{std::min(a, b), std::max(a, b)}] = e.at(2).get<Tick>();
                }
        }
        if (j.contains("placement")) {
            const json &p = j.at("placement");
            std::string mode = get_or<std::string>(p, "mode", "colocate");
            if (mode == "round_robin")
                s.placement.mode = PlacementSpec::round_robin;
            else if (mode != "colocate")
                throw Error(ErrorKind::bad_input, "placement mode " + mode);
            if (p.contains("spread"))
                for (const auto &c : p.at("spread"))
                    s.placement.spread.insert(c.get<std::string>());
            if (p.contains("fixed"))
                for (const auto &[k, v] : p.at("fixed").items())
                    s.placement.fixed[ContextId{k}] = v.get<int>();
        }
        if (j.contains("workload")) {
            const json &w = j.at("workload");
            std::string kind = get_or<std::string>(w, "kind", "open");
            if (kind == "closed")
                s.workload.kind = WorkloadSpec::closed;
            else if (kind != "open")
                throw Error(ErrorKind::bad_input, "workload kind " + kind);
            s.workload.clients = get_or(w, "clients", s.workload.clients);
            s.workload.think = get_or<Tick>(w, "think", s.workload.think);
            s.workload.max_events = get_or<std::int64_t>(w, "max_events", s.workload.max_events);
            s.workload.stop_at = get_or<Tick>(w, "stop_at", s.workload.stop_at);
            s.workload.profile.rate = get_or(w, "rate", s.workload.profile.rate);
            if (w.contains("profile")) {
                const json &p = w.at("profile");
                std::string shape = get_or<std::string>(p, "shape", "constant");
                if (shape == "triangle")
                    s.workload.profile.shape = RateProfile::triangle;
                else if (shape != "constant")
                    throw Error(ErrorKind::bad_input, "profile shape " + shape);
                s.workload.profile.rate = get_or(p, "rate", s.workload.profile.rate);
                s.workload.profile.low = get_or(p, "low", s.workload.profile.low);
                s.workload.profile.high = get_or(p, "high", s.workload.profile.high);
                s.workload.profile.period = get_or<Tick>(p, "period", s.workload.profile.period);
                s.workload.profile.start = get_or<Tick>(p, "start", s.workload.profile.start);
            }
            if (w.contains("targets"))
                for (const auto &t : w.at("targets")) {
                    TargetSpec ts;
                    if (t.contains("ctx"))
                        ts.ctx = ContextId{t.at("ctx").get<std::string>()};
                    else
                        ts.class_name = t.at("class").get<std::string>();
                    ts.method = t.at("method").get<std::string>();
                    if (t.contains("args"))
                        for (const auto &a : t.at("args"))
                            ts.args.push_back(value_from_json(a));
                    ts.weight = get_or(t, "weight", 1.0);
                    s.workload.targets.push_back(std::move(ts));
                }
        }
        if (j.contains("policy")) {
            const json &p = j.at("policy");
            std::string kind = get_or<std::string>(p, "kind", "none");
            if (kind == "server_contention")
                s.policy.kind = PolicySpec::server_contention;
            else if (kind == "resource_utilization")
                s.policy.kind = PolicySpec::resource_utilization;
            else if (kind != "none")
                throw Error(ErrorKind::bad_input, "policy kind " + kind);
            s.policy.max_contexts = get_or(p, "max_contexts", s.policy.max_contexts);
            s.policy.scale_in_fraction = get_or(p, "scale_in_fraction", s.policy.scale_in_fraction);
            s.policy.lower = get_or(p, "lower", s.policy.lower);
            s.policy.upper = get_or(p, "upper", s.policy.upper);
            s.policy.threshold = get_or(p, "threshold", s.policy.threshold);
            s.policy.window = get_or<Tick>(p, "window", s.policy.window);
        }
        if (j.contains("migrations"))
            for (const auto &m : j.at("migrations"))
                s.migrations.push_back(
                    {ContextId{m.at("ctx").get<std::string>()}, m.at("to").get<int>(), m.at("at").get<Tick>()});
    } catch (const json::exception &e) {
        throw Error(ErrorKind::bad_input, std::string("scenario: ") + e.what());
    }
    return s;
}

Scenario load_scenario_file(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::bad_input, "cannot read " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception &e) {
        throw Error(ErrorKind::bad_input, path + ": " + e.what());
    }
    auto dir = std::filesystem::path(path).parent_path().string();
    return scenario_from_json(j, dir.empty() ? "." : dir);
}

json scenario_to_json(const Scenario &s)
{
    json j;
    j["name"] = s.name;
    if (!s.program_path.empty())
        j["program"] = s.program_path;
    j["servers"] = s.servers;
    j["min_servers"] = s.min_servers;
    j["max_servers"] = s.max_servers;
    j["capacity"] = s.capacity;
    j["delta"] = s.delta;
    j["state_bytes"] = s.state_bytes;
    j["bandwidth"] = s.bandwidth;
    j["seed"] = s.seed;
    j["until"] = s.until;
    j["dominator_sequencing"] = s.dominator_sequencing;
    json links = json::array();
    for (const auto &[k, v] : s.latency.links)
        links.push_back({k.first, k.second, v});
    j["latency"] = {{"default", s.latency.base},
                    {"em", s.latency.em},
                    {"client", s.latency.client},
                    {"jitter", s.latency.jitter},
                    {"links", links}};
    json fixed = json::object();
    for (const auto &[k, v] : s.placement.fixed)
        fixed[k.value] = v;
    j["placement"] = {{"mode", s.placement.mode == PlacementSpec::round_robin ? "round_robin" : "colocate"},
                      {"spread", s.placement.spread},
                      {"fixed", fixed}};
    json targets = json::array();
    for (const auto &t : s.workload.targets) {
        json tj{{"method", t.method}, {"weight", t.weight}};
        if (t.ctx)
            tj["ctx"] = t.ctx->value;
        else
            tj["class"] = t.class_name;
        json args = json::array();
        for (const auto &a : t.args)
            args.push_back(value_to_json(a));
        tj["args"] = args;
        targets.push_back(tj);
    }
    const RateProfile &rp = s.workload.profile;
    j["workload"] = {{"kind", s.workload.kind == WorkloadSpec::closed ? "closed" : "open"},
                     {"clients", s.workload.clients},
                     {"think", s.workload.think},
                     {"max_events", s.workload.max_events},
                     {"stop_at", s.workload.stop_at},
                     {"profile",
                      {{"shape", rp.shape == RateProfile::triangle ? "triangle" : "constant"},
                       {"rate", rp.rate},
                       {"low", rp.low},
                       {"high", rp.high},
                       {"period", rp.period},
                       {"start", rp.start}}},
                     {"targets", targets}};
    const char *pk = s.policy.kind == PolicySpec::server_contention      ? "server_contention"
                     : s.policy.kind == PolicySpec::resource_utilization ? "resource_utilization"
                                                                         : "none";
    j["policy"] = {{"kind", pk},
                   {"max_contexts", s.policy.max_contexts},
                   {"scale_in_fraction", s.policy.scale_in_fraction},
                   {"lower", s.policy.lower},
                   {"upper", s.policy.upper},
                   {"threshold", s.policy.threshold},
                   {"window", s.policy.window}};
    json migs = json::array();
    for (const auto &m : s.migrations)
        migs.push_back({{"ctx", m.ctx.value}, {"to", m.to}, {"at", m.at}});
    j["migrations"] = migs;
    return j;
}

} // namespace aeon
