// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/rng.hpp"

#include <cmath>
#include <numbers>

namespace moeforge {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t SplitMix64::next() {
    state_ += kGolden;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1p-53; }

double SplitMix64::normal() {
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SplitMix64::below(std::uint64_t bound) {
    // rejection sampling keeps the result unbiased
    const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - bound + 1) % bound;
    for (;;) {
        const std::uint64_t r = next();
        if (r >= limit) return r % bound;
    }
}

SplitMix64 keyed_stream(std::uint64_t seed, std::uint64_t key) {
    return SplitMix64(seed ^ (kGolden * (key + 1)));
}

}  // namespace moeforge
