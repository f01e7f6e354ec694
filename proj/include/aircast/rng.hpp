#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace aircast {

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of the named substream `purpose` under a master seed.
constexpr std::uint64_t substream_seed(std::uint64_t master, std::string_view purpose) noexcept
{
    return splitmix64(master ^ fnv1a64(purpose));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view purpose)
{
    return std::mt19937_64(substream_seed(master, purpose));
}

} // namespace aircast
