#include "aeon/digest.hpp"
#include "aeon/error.hpp"
#include "aeon/ids.hpp"

#include <cstdio>

namespace aeon {

namespace {
constexpr std::uint64_t kPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::string_view s, std::uint64_t h)
{
    for (unsigned char c : s) {
        h ^= c;
        h *= kPrime;
    }
    // final avalanche so short inputs spread over all bits
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}
} // namespace

Digest digest_of(std::string_view bytes)
{
    return Digest{fnv1a(bytes, 0xcbf29ce484222325ULL), fnv1a(bytes, 0x84222325cbf29ce4ULL ^ bytes.size())};
}

std::string Digest::hex() const
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                  static_cast<unsigned long long>(lo));
    return buf;
}

const char *to_string(ErrorKind k)
{
    switch (k) {
    case ErrorKind::syntax: return "syntax-error";
    case ErrorKind::unknown_context: return "unknown-context";
    case ErrorKind::unknown_method: return "unknown-method";
    case ErrorKind::unknown_class: return "unknown-class";
    case ErrorKind::duplicate: return "duplicate";
    case ErrorKind::cycle: return "cycle-error";
    case ErrorKind::missing_edge: return "missing-edge";
    case ErrorKind::access_violation: return "access-violation";
    case ErrorKind::stuck: return "stuck-error";
    case ErrorKind::unbound_variable: return "unbound-variable";
    case ErrorKind::type_mismatch: return "type-mismatch";
    case ErrorKind::overflow: return "overflow";
    case ErrorKind::div_by_zero: return "division-by-zero";
    case ErrorKind::no_waiting_placeholder: return "no-waiting-placeholder";
    case ErrorKind::protocol_violation: return "protocol-violation";
    case ErrorKind::illegal_target: return "illegal-target";
    case ErrorKind::premature_commit: return "premature-commit";
    case ErrorKind::stale_choice: return "stale-choice";
    case ErrorKind::migration_in_flight: return "migration-in-flight";
    case ErrorKind::schema_mismatch: return "schema-mismatch";
    case ErrorKind::bad_input: return "bad-input";
    }
    return "error";
}

std::string SemType::str() const
{
    switch (kind) {
    case Any: return "any";
    case Int: return "int";
    case Bool: return "bool";
    case Unit: return "unit";
    case Record: return "record";
    case Context: return class_name.empty() ? "ref" : "ref " + class_name;
    }
    return "?";
}

} // namespace aeon
