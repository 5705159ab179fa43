#include "cli.hpp"

#include "aeon/cluster_sim.hpp"
#include "aeon/error.hpp"
#include "aeon/parser.hpp"
#include "aeon/static_checks.hpp"
#include "aeon/trace_io.hpp"
#include "aeon/verifier.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace aeon::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string out_dir;
    std::string format = "text";
};

std::string default_out_dir()
{
    const char *env = std::getenv("AEON_OUT_DIR");
    return env && *env ? env : "aeon-out";
}

std::string read_file(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::bad_input, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path ensure_dir(const std::string &dir)
{
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

// An explicit event list, written as the body of a main block.
std::vector<ScriptEntry> parse_events(const std::string &text)
{
    Program p = parse_program("main { " + text + " }", "--events");
    return p.main_script;
}

std::string script_text(const std::vector<ScriptEntry> &script)
{
    std::string s;
    for (const auto &e : script) {
        if (e.kind == ScriptEntry::snapshot) {
            s += "snapshot " + e.target.value + "; ";
            continue;
        }
        s += "event " + e.target.value + "." + e.method + "(";
        for (std::size_t i = 0; i < e.args.size(); ++i) {
            const Value &v = e.args[i];
            s += i ? ", " : "";
            s += v.is_context() ? v.as_context().value : to_string(v);
        }
        s += "); ";
    }
    return s;
}

struct LoadedProgram {
    std::shared_ptr<const Program> program;
    std::string digest;
    std::string graph_digest;
};

LoadedProgram load_checked(const std::string &path)
{
    std::string text = read_file(path);
    Program p = parse_program(text, path);
    CheckResult r = check_all(p);
    if (!r.accepted) {
        std::string msg = "program rejected:";
        for (const auto &d : r.diagnostics)
            msg += "\n  " + d.str();
        throw Error(ErrorKind::bad_input, msg);
    }
    LoadedProgram lp;
    lp.digest = digest_of(text).hex();
    lp.graph_digest = digest_of(p.build_graph().canonical()).hex();
    lp.program = std::make_shared<const Program>(std::move(p));
    return lp;
}

// One choice per applied transition: entries sharing a step came from the same one.
std::vector<TransitionChoice> choices_of(const std::vector<TraceEntry> &trace)
{
    std::vector<TransitionChoice> out;
    std::optional<std::uint64_t> last;
    for (const auto &t : trace) {
        if (last && *last == t.step)
            continue;
        last = t.step;
        out.push_back(t.choice);
    }
    return out;
}

void write_lines(const fs::path &file, const RunManifest &m, const std::vector<std::string> &lines)
{
    std::ofstream os(file);
    os << to_json(m).dump() << '\n';
    for (const auto &l : lines)
        os << l << '\n';
}

int cmd_check(const std::vector<std::string> &paths, const Common &c, bool write_report, std::ostream &out)
{
    bool all_ok = true;
    std::vector<std::string> records;
    for (const auto &path : paths) {
        std::vector<std::string> diags;
        bool ok = true;
        try {
            Program p = load_program_file(path);
            CheckResult r = check_all(p);
            ok = r.accepted;
            for (const auto &d : r.diagnostics)
                diags.push_back(d.str());
        } catch (const SyntaxError &e) {
            ok = false;
            diags.push_back(path + ":" + std::to_string(e.line) + ":" + std::to_string(e.col) + ": syntax error: " +
                            std::string(e.what()).substr(std::string(e.what()).find(": ", 8) + 2));
        } catch (const Error &e) {
            ok = false;
            diags.push_back(path + ":0:0: " + e.what());
        }
        all_ok = all_ok && ok;
        json rec{{"type", "check"}, {"path", path}, {"accepted", ok}, {"diagnostics", diags}};
        records.push_back(rec.dump());
        if (c.format == "records") {
            out << rec.dump() << '\n';
        } else {
            out << path << ": " << (ok ? "accepted" : "rejected") << '\n';
            for (const auto &d : diags)
                out << "  " << d << '\n';
        }
    }
    if (write_report) {
        RunManifest m;
        m.command = "check";
        m.seed = c.seed;
        m.options = {{"paths", paths}};
        write_lines(ensure_dir(c.out_dir) / "check.jsonl", m, records);
    }
    return all_ok ? 0 : 1;
}

struct ExploreArgs {
    std::string path;
    std::size_t bound = 200'000;
    std::size_t depth = 64;
    std::string events;
    bool unsafe_no_dominator = false;
    bool opt_unshared_start = false;
};

GlobalConfig replay_choices(std::shared_ptr<const Program> program, const EngineOptions &eo,
                            const std::vector<ScriptEntry> &script, const std::vector<TransitionChoice> &choices)
{
    GlobalConfig cfg = initial_config(std::move(program), eo, script);
    for (const auto &ch : choices)
        apply_in_place(cfg, ch);
    return cfg;
}

int cmd_explore(const ExploreArgs &a, const Common &c, std::ostream &out)
{
    LoadedProgram lp = load_checked(a.path);
    std::vector<ScriptEntry> script = a.events.empty() ? lp.program->main_script : parse_events(a.events);
    ExploreOptions opts;
    opts.max_configs = a.bound;
    opts.max_depth = a.depth;
    opts.engine.dominator_sequencing = !a.unsafe_no_dominator;
    opts.engine.opt_unshared_start = a.opt_unshared_start;
    ExplorationReport rep = explore(lp.program, opts, script);

    RunManifest m;
    m.command = "explore";
    m.program = a.path;
    m.program_digest = lp.digest;
    m.graph_digest = lp.graph_digest;
    m.seed = c.seed;
    EngineOptions eo = opts.engine;
    eo.record_trace = true;
    m.options = {{"bound", a.bound},
                 {"depth", a.depth},
                 {"events", script_text(script)},
                 {"engine", to_json(eo)}};

    // witness of the first violation, else one seeded run
    std::vector<TraceEntry> trace;
    if (!rep.deadlocks.empty())
        trace = rep.deadlocks.front().second;
    else if (!rep.stuck.empty())
        trace = rep.stuck.front().trace;
    else if (!rep.serializability_violations.empty())
        trace = rep.serializability_violations.front().trace;
    else if (!rep.realtime_violations.empty())
        trace = rep.realtime_violations.front().trace;
    else if (!rep.invariant_violations.empty())
        trace = rep.invariant_violations.front().trace;
    else
        trace = run_to_completion(initial_config(lp.program, eo, script), c.seed).trace;
    GlobalConfig last = replay_choices(lp.program, eo, script, choices_of(trace));
    RunManifest tm = m;
    tm.options["final_digest"] = config_digest(last).hex();

    fs::path dir = ensure_dir(c.out_dir);
    {
        std::ofstream os(dir / "trace.jsonl");
        write_trace(os, tm, trace);
    }
    if (c.format == "records") {
        json r = report_json(rep);
        r["type"] = "report";
        write_lines(dir / "report.jsonl", m, {r.dump()});
        out << r.dump() << '\n';
    } else {
        std::string text = report_text(rep);
        std::ofstream os(dir / "report.txt");
        os << to_json(m).dump() << '\n' << text;
        out << text;
    }
    out << "report and trace written to " << dir.string() << '\n';
    return rep.exit_code();
}

struct SimArgs {
    std::string path;
    std::optional<std::int64_t> until;
    std::optional<int> servers;
    bool seed_given = false;
};

int cmd_simulate(const SimArgs &a, const Common &c, std::ostream &out)
{
    Scenario sc = load_scenario_file(a.path);
    if (a.seed_given)
        sc.seed = c.seed;
    if (a.until)
        sc.until = *a.until;
    if (a.servers)
        sc.servers = *a.servers;
    MetricsReport rep = run_sim(sc);

    RunManifest m;
    m.command = "simulate";
    m.program = sc.program_path;
    if (!sc.program_path.empty())
        m.program_digest = digest_of(read_file(sc.program_path)).hex();
    m.graph_digest = digest_of(sc.program->build_graph().canonical()).hex();
    m.seed = sc.seed;
    m.options = {{"scenario", a.path}, {"until", sc.until}, {"servers", sc.servers}};

    fs::path dir = ensure_dir(c.out_dir);
    write_lines(dir / "metrics.jsonl", m, rep.records());
    {
        std::ofstream os(dir / "series.csv");
        os << "# " << to_json(m).dump() << '\n' << rep.csv();
    }
    json s = rep.summary_json();
    if (c.format == "records") {
        out << s.dump() << '\n';
    } else {
        out << "scenario " << rep.scenario << " seed " << rep.seed << " until " << rep.until << '\n';
        out << "issued " << rep.issued << " completed " << rep.completed << " failed " << rep.failed << " pending "
            << rep.pending << '\n';
        out << "throughput " << rep.throughput() << " /tick, latency p50 " << rep.latency_p50 << " p99 "
            << rep.latency_p99 << '\n';
        out << "migrations " << rep.migrations.size() << ", peak servers " << s["peak_servers"] << '\n';
        out << "metrics written to " << dir.string() << '\n';
    }
    return 0;
}

int cmd_replay(const std::string &path, const Common &c, std::ostream &out, std::ostream &err)
{
    TraceFile tf;
    {
        std::ifstream in(path);
        if (!in)
            throw Error(ErrorKind::bad_input, "cannot read " + path);
        tf = read_trace(in);
    }
    const RunManifest &m = tf.manifest;
    LoadedProgram lp = load_checked(m.program);
    if (lp.digest != m.program_digest || lp.graph_digest != m.graph_digest)
        throw Error(ErrorKind::schema_mismatch, "trace was recorded against a different program or graph (" +
                                                    m.program_digest + "/" + m.graph_digest + ")");
    EngineOptions eo = engine_options_from_json(m.options.value("engine", json::object()));
    eo.record_trace = true;
    std::vector<ScriptEntry> script = parse_events(m.options.value("events", ""));
    GlobalConfig cfg = initial_config(lp.program, eo, script);
    auto choices = choices_of(tf.entries);
    for (std::size_t i = 0; i < choices.size(); ++i) {
        auto enabled = enabled_transitions(cfg);
        if (std::find(enabled.begin(), enabled.end(), choices[i]) == enabled.end()) {
            err << "divergence at step " << i + 1 << ": " << choices[i].str() << " is not enabled\n";
            return kExitDivergence;
        }
        apply_in_place(cfg, choices[i]);
    }
    std::string want = m.options.value("final_digest", "");
    std::string got = config_digest(cfg).hex();
    if (want != got) {
        err << "divergence after " << choices.size() << " steps: final digest " << got << ", recorded " << want
            << '\n';
        return kExitDivergence;
    }
    if (c.format == "records")
        out << json{{"type", "replay"}, {"steps", choices.size()}, {"final_digest", got}, {"ok", true}}.dump() << '\n';
    else
        out << "replayed " << choices.size() << " steps, final digest " << got << " matches\n";
    return 0;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
    CLI::App app{"aeon: static checks, exploration, simulation and replay for context programs"};
    app.require_subcommand(1);
    Common c;
    c.out_dir = default_out_dir();
    auto common = [&](CLI::App *sub) {
        sub->add_option("--seed", c.seed, "seed for schedules and workloads");
        sub->add_option("--out-dir", c.out_dir, "output directory (default $AEON_OUT_DIR or aeon-out)");
        sub->add_option("--format", c.format, "text or records")->check(CLI::IsMember({"text", "records"}));
    };

    std::vector<std::string> check_paths;
    auto *check = app.add_subcommand("check", "static checks: class acyclicity, ro discipline, well-formedness");
    check->add_option("paths", check_paths, "program files")->required();
    common(check);

    ExploreArgs ea;
    auto *exp = app.add_subcommand("explore", "bounded exhaustive exploration of all schedules");
    exp->add_option("path", ea.path, "program file")->required();
    exp->add_option("--bound", ea.bound, "maximum distinct configurations");
    exp->add_option("--depth", ea.depth, "maximum schedule length");
    exp->add_option("--events", ea.events, "event list overriding main, e.g. \"event P.m(1);\"");
    exp->add_flag("--unsafe-no-dominator", ea.unsafe_no_dominator)->group("");
    exp->add_flag("--opt-unshared-start", ea.opt_unshared_start)->group("");
    common(exp);

    SimArgs sa;
    std::int64_t until = -1;
    int servers = -1;
    auto *sim = app.add_subcommand("simulate", "cluster simulation of a scenario");
    sim->add_option("scenario", sa.path, "scenario JSON")->required();
    sim->add_option("--until", until, "last tick");
    sim->add_option("--servers", servers, "initial server count");
    common(sim);

    std::string trace_path;
    auto *rep = app.add_subcommand("replay", "re-apply a recorded trace and compare digests");
    rep->add_option("trace", trace_path, "trace.jsonl")->required();
    common(rep);

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp &e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError &e) {
        std::ostringstream o, er;
        int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*check)
            return cmd_check(check_paths, c, check->count("--out-dir") > 0, out);
        if (*exp)
            return cmd_explore(ea, c, out);
        if (*sim) {
            sa.seed_given = sim->count("--seed") > 0;
            if (until >= 0)
                sa.until = until;
            if (servers > 0)
                sa.servers = servers;
            return cmd_simulate(sa, c, out);
        }
        if (*rep)
            return cmd_replay(trace_path, c, out, err);
    } catch (const Error &e) {
        err << e.what() << '\n';
        if (e.kind() == ErrorKind::schema_mismatch)
            return kExitSchemaMismatch;
        return kExitInput;
    }
    return kExitUsage;
}

} // namespace aeon::cli
