#pragma once

#include <cstdint>
#include <random>

namespace zits {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for an independent stream keyed by (root seed, stream id, row).
inline std::uint64_t stream_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t row) {
    return splitmix64(splitmix64(splitmix64(root) ^ stream) ^ row);
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::uint64_t stream, std::uint64_t row = 0) {
    return std::mt19937_64(stream_seed(root, stream, row));
}

} // namespace zits
