#pragma once

#include "aeon/ids.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <variant>

namespace aeon {

struct Unit {
    bool operator==(const Unit &) const = default;
};

struct Record;
using RecordPtr = std::shared_ptr<const Record>;

struct Value {
    std::variant<Unit, std::int64_t, bool, ContextId, RecordPtr> data;

    Value() = default;
    Value(Unit u) : data(u) {}
    Value(std::int64_t i) : data(i) {}
    Value(int i) : data(static_cast<std::int64_t>(i)) {}
    Value(bool b) : data(b) {}
    Value(ContextId c) : data(std::move(c)) {}
    Value(RecordPtr r) : data(std::move(r)) {}

    bool is_unit() const { return std::holds_alternative<Unit>(data); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_context() const { return std::holds_alternative<ContextId>(data); }
    bool is_record() const { return std::holds_alternative<RecordPtr>(data); }

    std::int64_t as_int() const;
    bool as_bool() const;
    const ContextId &as_context() const;
    const Record &as_record() const;
};

struct Record {
    std::map<std::string, Value> fields;
};

// Structural equality (records compared field by field).
bool operator==(const Value &a, const Value &b);

// Copy with fresh record storage at every level.
Value deep_copy(const Value &v);

// Canonical text form; used for digests and traces.
std::string to_string(const Value &v);

const char *type_name(const Value &v);

using Env = std::map<std::string, Value>;
using Store = std::map<std::string, Value>;

} // namespace aeon
