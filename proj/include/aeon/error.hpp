#pragma once

#include <stdexcept>
#include <string>

namespace aeon {

enum class ErrorKind {
    syntax,
    unknown_context,
    unknown_method,
    unknown_class,
    duplicate,
    cycle,
    missing_edge,
    access_violation,
    stuck,
    unbound_variable,
    type_mismatch,
    overflow,
    div_by_zero,
    no_waiting_placeholder,
    protocol_violation,
    illegal_target,
    premature_commit,
    stale_choice,
    migration_in_flight,
    schema_mismatch,
    bad_input,
};

const char *to_string(ErrorKind k);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &msg)
        : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind)
    {
    }

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

class SyntaxError : public Error {
public:
    SyntaxError(int line, int col, const std::string &msg)
        : Error(ErrorKind::syntax, std::to_string(line) + ":" + std::to_string(col) + ": " + msg), line(line),
          col(col)
    {
    }

    int line;
    int col;
};

} // namespace aeon
