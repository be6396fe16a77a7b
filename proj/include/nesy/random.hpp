#pragma once

#include <cstdint>
#include <random>

namespace nesy {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent engine for the `index`-th draw of a seeded family (MC sample, seed replicate, ...).
inline Rng derived_stream(std::uint64_t seed, std::uint64_t index) { return Rng{mix64(mix64(seed) ^ mix64(index + 1))}; }

}  // namespace nesy
