#pragma once

#include <cstdint>
#include <random>

namespace softhjb {

// splitmix64; used to derive independent substream seeds from (master, counter)
// so per-path / per-iteration streams do not depend on scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t counter) {
    return splitmix64(splitmix64(master) ^ splitmix64(counter + 0x5851f42d4c957f2dULL));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t counter = 0) {
    return std::mt19937_64(substream_seed(master, counter));
}

}  // namespace softhjb
