#include "aeon/trace_io.hpp"
#include "aeon/error.hpp"

#include <istream>
#include <ostream>

namespace aeon {

using nlohmann::json;

json to_json(const RunManifest &m)
{
    return json{{"manifest", true},       {"tool", m.tool},
                {"version", m.version},   {"schema", m.schema},
                {"command", m.command},   {"program", m.program},
                {"program_digest", m.program_digest}, {"graph_digest", m.graph_digest},
                {"seed", m.seed},         {"options", m.options}};
}

RunManifest manifest_from_json(const json &j)
{
    if (!j.is_object() || !j.value("manifest", false))
        throw Error(ErrorKind::schema_mismatch, "first line is not a run manifest");
    RunManifest m;
    m.tool = j.value("tool", "");
    m.version = j.value("version", "");
    m.schema = j.value("schema", -1);
    if (m.tool != "aeon" || m.schema != kTraceSchema)
        throw Error(ErrorKind::schema_mismatch,
                    "manifest " + m.tool + " schema " + std::to_string(m.schema) + ", expected aeon schema " +
                        std::to_string(kTraceSchema));
    m.command = j.value("command", "");
    m.program = j.value("program", "");
    m.program_digest = j.value("program_digest", "");
    m.graph_digest = j.value("graph_digest", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.options = j.value("options", json::object());
    return m;
}

json to_json(const TransitionChoice &c)
{
    return json{{"kind", to_string(c.kind)}, {"ctx", c.ctx.value}, {"eid", c.eid.value}, {"index", c.index}};
}

TransitionChoice choice_from_json(const json &j)
{
    auto k = choice_kind_from_string(j.at("kind").get<std::string>());
    if (!k)
        throw Error(ErrorKind::bad_input, "unknown choice kind " + j.at("kind").dump());
    TransitionChoice c;
    c.kind = *k;
    c.ctx = ContextId(j.at("ctx").get<std::string>());
    c.eid = EventId{j.at("eid").get<std::uint64_t>()};
    c.index = j.at("index").get<std::size_t>();
    return c;
}

json to_json(const TraceEntry &e)
{
    return json{{"step", e.step},     {"rule", e.rule},     {"ctx", e.ctx.value},
                {"eid", e.eid.str()}, {"detail", e.detail}, {"choice", to_json(e.choice)}};
}

TraceEntry trace_entry_from_json(const json &j)
{
    TraceEntry e;
    e.step = j.at("step").get<std::uint64_t>();
    e.rule = j.at("rule").get<std::string>();
    e.ctx = ContextId(j.at("ctx").get<std::string>());
    std::string eid = j.at("eid").get<std::string>();
    e.eid = EventId{eid.size() > 1 ? std::stoull(eid.substr(1)) : 0};
    e.detail = j.value("detail", "");
    e.choice = choice_from_json(j.at("choice"));
    return e;
}

json to_json(const EngineOptions &o)
{
    return json{{"dominator_sequencing", o.dominator_sequencing},
                {"opt_unshared_start", o.opt_unshared_start},
                {"suppress_nested", o.suppress_nested},
                {"linear", o.linear},
                {"track_touched", o.track_touched}};
}

EngineOptions engine_options_from_json(const json &j)
{
    EngineOptions o;
    o.dominator_sequencing = j.value("dominator_sequencing", true);
    o.opt_unshared_start = j.value("opt_unshared_start", false);
    o.suppress_nested = j.value("suppress_nested", false);
    o.linear = j.value("linear", false);
    o.track_touched = j.value("track_touched", false);
    return o;
}

void write_trace(std::ostream &os, const RunManifest &m, const std::vector<TraceEntry> &entries)
{
    os << to_json(m).dump() << '\n';
    for (const auto &e : entries)
        os << to_json(e).dump() << '\n';
}

TraceFile read_trace(std::istream &is)
{
    TraceFile tf;
    std::string line;
    bool first = true;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception &e) {
            throw Error(first ? ErrorKind::schema_mismatch : ErrorKind::bad_input,
                        "line " + std::to_string(lineno) + ": " + e.what());
        }
        if (first) {
            tf.manifest = manifest_from_json(j);
            first = false;
            continue;
        }
        try {
            tf.entries.push_back(trace_entry_from_json(j));
        } catch (const json::exception &e) {
            throw Error(ErrorKind::bad_input, "line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (first)
        throw Error(ErrorKind::schema_mismatch, "empty trace");
    return tf;
}

} // namespace aeon
