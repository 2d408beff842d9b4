#pragma once

#include <cstdint>
#include <random>

namespace msx {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent per-job seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept {
    return mix_seed(parent ^ mix_seed(tag));
}

template <class... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag, Tags... rest) noexcept {
    return derive_seed(derive_seed(parent, tag), static_cast<std::uint64_t>(rest)...);
}

}  // namespace msx
