#pragma once

// Counter-based seed derivation: every replicate, subject batch or bootstrap
// draw gets its own engine seeded from (master seed, path of indices), so
// results never depend on evaluation order or thread count.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace msm {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(master, path));
}

// Stream tags used across modules.
namespace stream {
inline constexpr std::uint64_t latent = 1;
inline constexpr std::uint64_t truncation = 2;
inline constexpr std::uint64_t censoring = 3;
inline constexpr std::uint64_t replication = 10;
inline constexpr std::uint64_t bootstrap = 11;
inline constexpr std::uint64_t oracle = 12;
}  // namespace stream

}  // namespace msm
