#include "scenarios.hpp"

#include "aeon/error.hpp"
#include "aeon/parser.hpp"
#include "aeon/static_checks.hpp"

namespace aeon::testing {

std::string scenario_path(const std::string &name)
{
    return std::string(AEON_SCENARIO_DIR) + "/" + name;
}

std::shared_ptr<const Program> load_scenario_program(const std::string &name)
{
    Program p = load_program_file(scenario_path(name));
    CheckResult r = check_all(p);
    if (!r.accepted) {
        std::string msg = name + " rejected:";
        for (const auto &d : r.diagnostics)
            msg += "\n  " + d.str();
        throw Error(ErrorKind::bad_input, msg);
    }
    return std::make_shared<const Program>(std::move(p));
}

std::vector<ScriptEntry> events_from_text(const std::string &body)
{
    return parse_program("main { " + body + " }", "<events>").main_script;
}

} // namespace aeon::testing
