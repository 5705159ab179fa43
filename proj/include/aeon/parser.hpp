#pragma once

#include "aeon/ast.hpp"

#include <string>
#include <string_view>

namespace aeon {

// Parses the scenario DSL. Calls nested inside expressions are hoisted into
// temporaries so every call sits in statement position.
Program parse_program(std::string_view text, const std::string &source_name = "<input>");

Program load_program_file(const std::string &path);

} // namespace aeon
