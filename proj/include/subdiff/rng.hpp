#pragma once
#include <cstdint>
#include <random>

namespace subdiff {

// splitmix64: cheap, full-period 64-bit mixer used to derive per-path stream seeds
// from (master seed, path index, stream tag) without correlations between streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

enum class StreamTag : std::uint64_t {
    Subordinator = 0x5ULL,
    Brownian = 0xbULL,
    Generic = 0x11ULL,
};

// Counter-style stream derivation: the same (master, path, tag) triple always
// yields the same generator state, so paths can be produced in any order or in
// parallel and stay bit-reproducible.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t path_index, StreamTag tag) {
    return splitmix64(splitmix64(master) ^ splitmix64(path_index + 0x1000ULL) ^ splitmix64(static_cast<std::uint64_t>(tag)));
}

inline std::mt19937_64 make_stream(std::uint64_t master, std::uint64_t path_index, StreamTag tag) {
    return std::mt19937_64(stream_seed(master, path_index, tag));
}

} // namespace subdiff
