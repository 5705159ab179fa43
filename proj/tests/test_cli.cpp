#include "cli.hpp"
#include "scenarios.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using aeon::testing::scenario_path;
using nlohmann::json;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    Result r;
    r.code = aeon::cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path fresh_dir(const std::string &name)
{
    fs::path p = fs::temp_directory_path() / ("aeon-cli-test-" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const fs::path &p)
{
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

void write_lines(const fs::path &p, const std::vector<std::string> &lines)
{
    std::ofstream os(p);
    for (const auto &l : lines)
        os << l << '\n';
}

json manifest_of(const fs::path &p)
{
    std::string first = lines_of(p).at(0);
    if (!first.empty() && first[0] == '#')
        first = first.substr(2);
    return json::parse(first);
}

std::string explore_trace(const std::string &program, const fs::path &dir)
{
    auto r = run({"explore", program, "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    return (dir / "trace.jsonl").string();
}

} // namespace

TEST(CliCheck, AcceptsGameProgram)
{
    auto r = run({"check", scenario_path("game.aeon")});
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("accepted"), std::string::npos);
}

TEST(CliCheck, ClassCycleRejectedWithCycle)
{
    auto r = run({"check", scenario_path("class_cycle.aeon")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("cycle"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("A -> B -> A"), std::string::npos) << r.out;
}

TEST(CliCheck, ReadOnlyWriteRejectedWithLocation)
{
    auto r = run({"check", scenario_path("ro_write.aeon")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("ro_write.aeon:5:"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("Counter.peek"), std::string::npos) << r.out;
}

TEST(CliCheck, RecordsFormatIsOneJsonPerFile)
{
    auto r = run({"check", scenario_path("game.aeon"), scenario_path("ro_write.aeon"), "--format", "records"});
    EXPECT_EQ(r.code, 1);
    std::istringstream in(r.out);
    std::vector<json> recs;
    for (std::string l; std::getline(in, l);)
        recs.push_back(json::parse(l));
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_TRUE(recs[0]["accepted"].get<bool>());
    EXPECT_FALSE(recs[1]["accepted"].get<bool>());
}

TEST(CliCheck, MissingFileIsRejected)
{
    auto r = run({"check", "/nonexistent/file.aeon"});
    EXPECT_NE(r.code, 0);
}

TEST(CliExplore, TreasureHorsePasses)
{
    auto dir = fresh_dir("explore-pass");
    auto r = run({"explore", scenario_path("treasure_horse.aeon"), "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "report.txt"));
    EXPECT_TRUE(fs::exists(dir / "trace.jsonl"));
}

TEST(CliExplore, UnsafeHookReportsDeadlock)
{
    auto dir = fresh_dir("explore-unsafe");
    auto r = run({"explore", scenario_path("treasure_horse.aeon"), "--unsafe-no-dominator", "--format", "records",
                  "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 2) << r.out << r.err;
    json rep = json::parse(r.out.substr(0, r.out.find('\n')));
    ASSERT_TRUE(rep.contains("deadlocks"));
    EXPECT_FALSE(rep["deadlocks"].empty()) << rep.dump();
}

TEST(CliExplore, TinyBoundIsInconclusive)
{
    auto dir = fresh_dir("explore-bound");
    auto r = run({"explore", scenario_path("timeline.aeon"), "--bound", "3", "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 3) << r.out << r.err;
}

TEST(CliExplore, EventsOverrideMain)
{
    auto dir = fresh_dir("explore-events");
    auto r = run({"explore", scenario_path("game.aeon"), "--events", "event Horse.ride(2);", "--out-dir",
                  dir.string()});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_EQ(manifest_of(dir / "trace.jsonl")["options"]["events"], "event Horse.ride(2); ");
}

TEST(CliExplore, RejectedProgramIsAnInputError)
{
    auto dir = fresh_dir("explore-bad");
    auto r = run({"explore", scenario_path("class_cycle.aeon"), "--out-dir", dir.string()});
    EXPECT_EQ(r.code, aeon::cli::kExitInput);
    EXPECT_FALSE(r.err.empty());
}

TEST(CliSimulate, ZeroClientsAllZero)
{
    auto dir = fresh_dir("sim-zero");
    auto r = run({"simulate", scenario_path("zero_clients.json"), "--format", "records", "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    json s = json::parse(r.out);
    EXPECT_EQ(s["issued"], 0);
    EXPECT_EQ(s["completed"], 0);
    EXPECT_EQ(s["failed"], 0);
    EXPECT_EQ(s["throughput"], 0.0);
}

TEST(CliSimulate, SameSeedGivesIdenticalFiles)
{
    auto a = fresh_dir("sim-a"), b = fresh_dir("sim-b");
    for (const auto &d : {a, b}) {
        auto r = run({"simulate", scenario_path("migration.json"), "--seed", "5", "--out-dir", d.string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
    EXPECT_EQ(slurp(a / "series.csv"), slurp(b / "series.csv"));
    EXPECT_EQ(manifest_of(a / "metrics.jsonl")["seed"], 5);
}

TEST(CliSimulate, ElasticityWritesServerSeries)
{
    auto dir = fresh_dir("sim-elastic");
    auto r = run({"simulate", scenario_path("elasticity.json"), "--out-dir", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto lines = lines_of(dir / "series.csv");
    ASSERT_GT(lines.size(), 2u);
    EXPECT_NE(lines[1].find("servers"), std::string::npos) << lines[1];
    EXPECT_EQ(lines.size(), 2u + 1200u);
}

TEST(CliSimulate, MissingScenarioIsAnInputError)
{
    auto r = run({"simulate", "/nonexistent.json"});
    EXPECT_EQ(r.code, aeon::cli::kExitInput);
}

TEST(CliReplay, FreshTraceReplays)
{
    auto dir = fresh_dir("replay-fresh");
    auto trace = explore_trace(scenario_path("treasure_horse.aeon"), dir);
    auto r = run({"replay", trace});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("matches"), std::string::npos);
}

TEST(CliReplay, DeadlockWitnessReplays)
{
    auto dir = fresh_dir("replay-witness");
    auto r = run({"explore", scenario_path("treasure_horse.aeon"), "--unsafe-no-dominator", "--out-dir",
                  dir.string()});
    ASSERT_EQ(r.code, 2);
    EXPECT_EQ(run({"replay", (dir / "trace.jsonl").string()}).code, 0);
}

TEST(CliReplay, TamperedStepReportsFirstDivergence)
{
    auto dir = fresh_dir("replay-tamper");
    auto trace = explore_trace(scenario_path("treasure_horse.aeon"), dir);
    auto lines = lines_of(trace);
    // the fifth transition now names a context where nothing is enabled
    int step = 0;
    std::uint64_t last = 0;
    bool done = false;
    for (std::size_t i = 1; i < lines.size() && !done; ++i) {
        json e = json::parse(lines[i]);
        if (e["step"].get<std::uint64_t>() == last)
            continue;
        last = e["step"].get<std::uint64_t>();
        if (++step == 5) {
            e["choice"]["ctx"] = "Sword";
            lines[i] = e.dump();
            done = true;
        }
    }
    ASSERT_TRUE(done);
    write_lines(trace, lines);
    auto r = run({"replay", trace});
    EXPECT_EQ(r.code, aeon::cli::kExitDivergence);
    EXPECT_NE(r.err.find("divergence at step 5"), std::string::npos) << r.err;
}

TEST(CliReplay, TruncatedTraceMissesFinalDigest)
{
    auto dir = fresh_dir("replay-trunc");
    auto trace = explore_trace(scenario_path("treasure_horse.aeon"), dir);
    auto lines = lines_of(trace);
    lines.pop_back();
    write_lines(trace, lines);
    auto r = run({"replay", trace});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("divergence"), std::string::npos) << r.err;
}

TEST(CliReplay, OlderSchemaIsAMismatch)
{
    auto dir = fresh_dir("replay-schema");
    auto trace = explore_trace(scenario_path("treasure_horse.aeon"), dir);
    auto lines = lines_of(trace);
    json m = json::parse(lines[0]);
    m["schema"] = m["schema"].get<int>() - 1;
    lines[0] = m.dump();
    write_lines(trace, lines);
    EXPECT_EQ(run({"replay", trace}).code, aeon::cli::kExitSchemaMismatch);
}

TEST(CliReplay, ChangedGraphIsAMismatch)
{
    auto dir = fresh_dir("replay-graph");
    fs::path prog = dir / "th.aeon";
    fs::copy_file(scenario_path("treasure_horse.aeon"), prog);
    auto trace = explore_trace(prog.string(), dir);
    std::string text = slurp(prog);
    auto at = text.find("  Armory -> Player3, Sword;");
    ASSERT_NE(at, std::string::npos);
    text.replace(at, std::string("  Armory -> Player3, Sword;").size(), "  Armory -> Player3;\n  Player3 -> Sword;");
    std::ofstream(prog) << text;
    auto r = run({"replay", trace});
    EXPECT_EQ(r.code, aeon::cli::kExitSchemaMismatch) << r.err;
}

TEST(CliManifest, EveryArtifactStartsWithManifest)
{
    auto dir = fresh_dir("manifest");
    ASSERT_EQ(run({"explore", scenario_path("timeline.aeon"), "--out-dir", dir.string()}).code, 0);
    ASSERT_EQ(run({"simulate", scenario_path("zero_clients.json"), "--out-dir", dir.string()}).code, 0);
    ASSERT_EQ(run({"check", scenario_path("game.aeon"), "--out-dir", dir.string()}).code, 0);
    for (const char *f : {"trace.jsonl", "report.txt", "metrics.jsonl", "series.csv", "check.jsonl"}) {
        json m = manifest_of(dir / f);
        EXPECT_EQ(m["tool"], "aeon") << f;
        EXPECT_TRUE(m.contains("command")) << f;
        EXPECT_TRUE(m.contains("version")) << f;
        EXPECT_TRUE(m.contains("seed")) << f;
    }
}

TEST(CliManifest, RerunFromManifestIsByteIdentical)
{
    auto a = fresh_dir("rerun-a"), b = fresh_dir("rerun-b");
    ASSERT_EQ(run({"explore", scenario_path("timeline.aeon"), "--seed", "9", "--out-dir", a.string()}).code, 0);
    json m = manifest_of(a / "trace.jsonl");
    ASSERT_EQ(run({"explore", m["program"].get<std::string>(), "--seed", std::to_string(m["seed"].get<int>()),
                   "--bound", std::to_string(m["options"]["bound"].get<int>()), "--depth",
                   std::to_string(m["options"]["depth"].get<int>()), "--events",
                   m["options"]["events"].get<std::string>(), "--out-dir", b.string()})
                  .code,
              0);
    EXPECT_EQ(slurp(a / "trace.jsonl"), slurp(b / "trace.jsonl"));
    EXPECT_EQ(slurp(a / "report.txt"), slurp(b / "report.txt"));
}

TEST(CliUsage, HiddenHooksStayOutOfHelp)
{
    auto top = run({"--help"});
    EXPECT_EQ(top.code, 0);
    for (const char *sub : {"check", "explore", "simulate", "replay"})
        EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
    auto r = run({"explore", "--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("--bound"), std::string::npos);
    EXPECT_EQ(r.out.find("unsafe-no-dominator"), std::string::npos);
    EXPECT_EQ(r.out.find("opt-unshared-start"), std::string::npos);
}

TEST(CliUsage, BadArgumentsAreUsageErrors)
{
    EXPECT_EQ(run({}).code, aeon::cli::kExitUsage);
    EXPECT_EQ(run({"frobnicate"}).code, aeon::cli::kExitUsage);
    EXPECT_EQ(run({"check", "x.aeon", "--format", "yaml"}).code, aeon::cli::kExitUsage);
}

TEST(CliBinary, ExitCodesFromRealProcess)
{
    const char *bin = std::getenv("AEON_BIN");
    if (!bin)
        GTEST_SKIP() << "AEON_BIN not set";
    auto status = [&](const std::string &args) {
        int s = std::system((std::string(bin) + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status("check " + scenario_path("game.aeon")), 0);
    EXPECT_EQ(status("check " + scenario_path("class_cycle.aeon")), 1);
    auto dir = fresh_dir("binary");
    EXPECT_EQ(status("explore " + scenario_path("treasure_horse.aeon") + " --unsafe-no-dominator --out-dir " +
                     dir.string()),
              2);
}
