// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense building blocks of the reference decoder.
//
// Activations are row-major [tokens x features]; weights are row-major
// [out x in] (the PyTorch Linear layout). Two implementations exist with the
// same signatures: `serial` is the straight-line reference, `omp` splits the
// token (and head) loops across OpenMP threads. Each output element is
// accumulated in the same order by both, so results are bit-identical for any
// thread count; tests/unit/kernels_test.cpp holds them to that.

#pragma once

#include <cmath>
#include <span>

namespace moeforge::kernels {

template <typename T>
inline T silu(T x) {
    return x / (T(1) + std::exp(-x));
}

/// d silu / dx
template <typename T>
inline T silu_grad(T x) {
    const T s = T(1) / (T(1) + std::exp(-x));
    return s * (T(1) + x * (T(1) - s));
}

/// y[r] = sum_c w[r, c] x[c]
template <typename T>
void matvec(std::span<const T> w, int rows, int cols, std::span<const T> x, std::span<T> y);

/// x[c] += sum_r w[r, c] y[r]
template <typename T>
void matvec_t_acc(std::span<const T> w, int rows, int cols, std::span<const T> y, std::span<T> x);

template <typename T>
T dot(std::span<const T> a, std::span<const T> b);

/// RMSNorm of one vector: y = x / sqrt(mean(x^2) + eps) * weight.
template <typename T>
void rmsnorm_vec(std::span<const T> x, std::span<const T> weight, T eps, std::span<T> y);

/// Rotary embedding on one head vector at position `pos`, pairing element
/// i with i + head_dim/2. `inverse` applies the transpose rotation.
template <typename T>
void rope_vec(std::span<T> head, int pos, double theta, bool inverse);

struct AttentionShape {
    int tokens = 0;
    int num_heads = 0;
    int num_kv_heads = 0;
    int head_dim = 0;
};

namespace serial {

/// y = x W^T for every token row.
template <typename T>
void linear(std::span<const T> x, std::span<const T> w, int tokens, int in, int out, std::span<T> y);

template <typename T>
void rmsnorm(std::span<const T> x, std::span<const T> weight, int tokens, int dim, T eps, std::span<T> y);

/// Applies rotary embedding in place to [tokens x heads*head_dim].
template <typename T>
void rope(std::span<T> x, int tokens, int heads, int head_dim, double theta, bool inverse = false);

/// Causal grouped-query attention. q: [tokens x H*d], k/v: [tokens x KV*d],
/// out: [tokens x H*d]. When `probs` is non-empty it receives the softmax
/// matrix [H x tokens x tokens] (entries above the diagonal are zero).
template <typename T>
void causal_attention(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                      const AttentionShape& shape, std::span<T> out, std::span<T> probs = {});

}  // namespace serial

namespace omp {

template <typename T>
void linear(std::span<const T> x, std::span<const T> w, int tokens, int in, int out, std::span<T> y);

template <typename T>
void rmsnorm(std::span<const T> x, std::span<const T> weight, int tokens, int dim, T eps, std::span<T> y);

template <typename T>
void rope(std::span<T> x, int tokens, int heads, int head_dim, double theta, bool inverse = false);

template <typename T>
void causal_attention(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                      const AttentionShape& shape, std::span<T> out, std::span<T> probs = {});

}  // namespace omp

/// Caps OpenMP worker threads (n <= 0 leaves the runtime default).
void set_num_threads(int n);
int max_threads();

}  // namespace moeforge::kernels
