#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace aeon {

// 128-bit content digest: two independent 64-bit FNV-1a lanes with different offsets.
struct Digest {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;

    auto operator<=>(const Digest &) const = default;
    bool operator==(const Digest &) const = default;

    std::string hex() const;
};

Digest digest_of(std::string_view bytes);

} // namespace aeon

template <>
struct std::hash<aeon::Digest> {
    std::size_t operator()(const aeon::Digest &d) const noexcept { return d.hi ^ (d.lo * 0x9e3779b97f4a7c15ULL); }
};
