// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Portable seeded randomness. The standard <random> distributions are
// implementation-defined, so router noise uses this fully specified stream
// instead; tests/oracles/noisy_router_draw.py reproduces it independently.
//
//   next():   SplitMix64 (state += 0x9E3779B97F4A7C15, then the usual mix)
//   uniform:  (next() >> 11) * 2^-53                      in [0, 1)
//   normal:   u1 = ((next() >> 11) + 1) * 2^-53, u2 = uniform
//             sqrt(-2 ln u1) * cos(2 pi u2)               (one draw per pair)

#pragma once

#include <cstdint>

namespace moeforge {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t state) : state_(state) {}

    std::uint64_t next();
    double uniform();
    double normal();
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

private:
    std::uint64_t state_;
};

/// Independent stream for a keyed sub-task (e.g. one router site):
/// state = seed XOR (0x9E3779B97F4A7C15 * (key + 1)).
SplitMix64 keyed_stream(std::uint64_t seed, std::uint64_t key);

}  // namespace moeforge
