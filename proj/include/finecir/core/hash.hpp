#pragma once

#include <cstdint>
#include <string_view>

namespace finecir {

/// 64-bit FNV-1a. Used wherever a stable, platform-independent hash is
/// part of a documented contract (mock clients, vocabulary buckets).
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace finecir
