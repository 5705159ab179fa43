#pragma once

#include "aeon/engine.hpp"

#include <iosfwd>
#include <json.hpp>
#include <string>
#include <vector>

namespace aeon {

inline constexpr const char *kToolVersion = "0.3.0";
inline constexpr int kTraceSchema = 1;

// First line of every artifact the tools write.
struct RunManifest {
    std::string tool = "aeon";
    std::string version = kToolVersion;
    int schema = kTraceSchema;
    std::string command;
    std::string program;
    std::string program_digest;
    std::string graph_digest;
    std::uint64_t seed = 0;
    nlohmann::json options = nlohmann::json::object();
};

nlohmann::json to_json(const RunManifest &m);
RunManifest manifest_from_json(const nlohmann::json &j);

nlohmann::json to_json(const TransitionChoice &c);
TransitionChoice choice_from_json(const nlohmann::json &j);

nlohmann::json to_json(const TraceEntry &e);
TraceEntry trace_entry_from_json(const nlohmann::json &j);

nlohmann::json to_json(const EngineOptions &o);
EngineOptions engine_options_from_json(const nlohmann::json &j);

struct TraceFile {
    RunManifest manifest;
    std::vector<TraceEntry> entries;
};

void write_trace(std::ostream &os, const RunManifest &m, const std::vector<TraceEntry> &entries);
// Throws schema_mismatch on a missing or foreign manifest, bad_input on malformed lines.
TraceFile read_trace(std::istream &is);

} // namespace aeon
