#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace stochmed {

// Independent generator for one (seed, key...) stream, e.g. (seed, replicate,
// variable). Streams do not depend on the order in which they are created.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::vector<std::uint32_t> material;
    auto push = [&material](std::uint64_t v) {
        material.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        material.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto k : keys) push(k);
    std::seed_seq seq(material.begin(), material.end());
    return std::mt19937_64(seq);
}

// Uniform on [0,1) with 53 random bits; identical on every standard library.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline int bernoulli(std::mt19937_64& rng, double p) { return uniform01(rng) < p ? 1 : 0; }

}  // namespace stochmed
