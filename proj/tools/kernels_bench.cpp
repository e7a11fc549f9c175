// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "moeforge/kernels.hpp"
#include "moeforge/rng.hpp"

namespace {

using namespace moeforge;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.normal());
    return v;
}

template <bool Parallel>
void BM_Linear(benchmark::State& state) {
    const int tokens = static_cast<int>(state.range(0)), in = 512, out = 1024;
    const auto x = random_vec(std::size_t(tokens) * in, 1), w = random_vec(std::size_t(out) * in, 2);
    std::vector<float> y(std::size_t(tokens) * out);
    for (auto _ : state) {
        if constexpr (Parallel) kernels::omp::linear<float>(x, w, tokens, in, out, y);
        else kernels::serial::linear<float>(x, w, tokens, in, out, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(tokens) * in * out * 2);
}

template <bool Parallel>
void BM_RmsNorm(benchmark::State& state) {
    const int tokens = static_cast<int>(state.range(0)), dim = 1024;
    const auto x = random_vec(std::size_t(tokens) * dim, 3), w = random_vec(dim, 4);
    std::vector<float> y(x.size());
    for (auto _ : state) {
        if constexpr (Parallel) kernels::omp::rmsnorm<float>(x, w, tokens, dim, 1e-5f, y);
        else kernels::serial::rmsnorm<float>(x, w, tokens, dim, 1e-5f, y);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_Rope(benchmark::State& state) {
    const int tokens = static_cast<int>(state.range(0)), heads = 16, d = 64;
    auto x = random_vec(std::size_t(tokens) * heads * d, 5);
    for (auto _ : state) {
        if constexpr (Parallel) kernels::omp::rope<float>(x, tokens, heads, d, 10000.0);
        else kernels::serial::rope<float>(x, tokens, heads, d, 10000.0);
        benchmark::DoNotOptimize(x.data());
    }
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
    const kernels::AttentionShape shape{static_cast<int>(state.range(0)), 16, 4, 64};
    const auto q = random_vec(std::size_t(shape.tokens) * 16 * 64, 6);
    const auto k = random_vec(std::size_t(shape.tokens) * 4 * 64, 7);
    const auto v = random_vec(std::size_t(shape.tokens) * 4 * 64, 8);
    std::vector<float> out(q.size());
    for (auto _ : state) {
        if constexpr (Parallel) kernels::omp::causal_attention<float>(q, k, v, shape, out);
        else kernels::serial::causal_attention<float>(q, k, v, shape, out);
        benchmark::DoNotOptimize(out.data());
    }
}

BENCHMARK(BM_Linear<false>)->Name("linear/serial")->Arg(16)->Arg(128);
BENCHMARK(BM_Linear<true>)->Name("linear/omp")->Arg(16)->Arg(128);
BENCHMARK(BM_RmsNorm<false>)->Name("rmsnorm/serial")->Arg(128)->Arg(1024);
BENCHMARK(BM_RmsNorm<true>)->Name("rmsnorm/omp")->Arg(128)->Arg(1024);
BENCHMARK(BM_Rope<false>)->Name("rope/serial")->Arg(128)->Arg(1024);
BENCHMARK(BM_Rope<true>)->Name("rope/omp")->Arg(128)->Arg(1024);
BENCHMARK(BM_Attention<false>)->Name("attention/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Attention<true>)->Name("attention/omp")->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
