#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>

namespace aeon {

struct ContextId {
    std::string value;

    ContextId() = default;
    ContextId(std::string v) : value(std::move(v)) {}
    ContextId(const char *v) : value(v) {}

    const std::string &str() const { return value; }
    bool empty() const { return value.empty(); }

    auto operator<=>(const ContextId &) const = default;
    bool operator==(const ContextId &) const = default;
};

inline std::ostream &operator<<(std::ostream &os, const ContextId &c) { return os << c.value; }

struct EventId {
    std::uint64_t value = 0;

    auto operator<=>(const EventId &) const = default;
    bool operator==(const EventId &) const = default;

    std::string str() const { return "E" + std::to_string(value); }
};

inline std::ostream &operator<<(std::ostream &os, const EventId &e) { return os << e.str(); }

enum class AccessMode { ro, ex };

inline const char *to_string(AccessMode m) { return m == AccessMode::ro ? "ro" : "ex"; }

// Static type of a field, parameter or local.
struct SemType {
    enum Kind { Any, Int, Bool, Unit, Record, Context };
    Kind kind = Any;
    std::string class_name; // Context only; empty means any context class

    static SemType context(std::string cls) { return SemType{Context, std::move(cls)}; }
    bool is_context() const { return kind == Context; }
    bool operator==(const SemType &) const = default;
    std::string str() const;
};

} // namespace aeon

template <>
struct std::hash<aeon::ContextId> {
    std::size_t operator()(const aeon::ContextId &c) const noexcept { return std::hash<std::string>{}(c.value); }
};

template <>
struct std::hash<aeon::EventId> {
    std::size_t operator()(const aeon::EventId &e) const noexcept { return std::hash<std::uint64_t>{}(e.value); }
};
