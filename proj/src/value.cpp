#include "aeon/value.hpp"
#include "aeon/error.hpp"

namespace aeon {

std::int64_t Value::as_int() const
{
    if (auto p = std::get_if<std::int64_t>(&data))
        return *p;
    throw Error(ErrorKind::type_mismatch, std::string("expected int, got ") + type_name(*this));
}

bool Value::as_bool() const
{
    if (auto p = std::get_if<bool>(&data))
        return *p;
    throw Error(ErrorKind::type_mismatch, std::string("expected bool, got ") + type_name(*this));
}

const ContextId &Value::as_context() const
{
    if (auto p = std::get_if<ContextId>(&data))
        return *p;
    throw Error(ErrorKind::type_mismatch, std::string("expected context reference, got ") + type_name(*this));
}

const Record &Value::as_record() const
{
    if (auto p = std::get_if<RecordPtr>(&data))
        return **p;
    throw Error(ErrorKind::type_mismatch, std::string("expected record, got ") + type_name(*this));
}

bool operator==(const Value &a, const Value &b)
{
    if (a.data.index() != b.data.index())
        return false;
    if (a.is_record())
        return a.as_record().fields == b.as_record().fields;
    return a.data == b.data;
}

Value deep_copy(const Value &v)
{
    if (!v.is_record())
        return v;
    auto r = std::make_shared<Record>();
    for (const auto &[k, x] : v.as_record().fields)
        r->fields.emplace(k, deep_copy(x));
    return Value(RecordPtr(std::move(r)));
}

std::string to_string(const Value &v)
{
    struct V {
        std::string operator()(Unit) const { return "unit"; }
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(const ContextId &c) const { return "#" + c.value; }
        std::string operator()(const RecordPtr &r) const
        {
            std::string s = "{";
            bool first = true;
            for (const auto &[k, x] : r->fields) {
                if (!first)
                    s += ", ";
                s += k + ": " + to_string(x);
                first = false;
            }
            return s + "}";
        }
    };
    return std::visit(V{}, v.data);
}

const char *type_name(const Value &v)
{
    switch (v.data.index()) {
    case 0: return "unit";
    case 1: return "int";
    case 2: return "bool";
    case 3: return "context";
    default: return "record";
    }
}

} // namespace aeon
