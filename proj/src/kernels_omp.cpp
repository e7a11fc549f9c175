// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "moeforge/kernels.hpp"

namespace moeforge::kernels {

void set_num_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

namespace omp {

template <typename T>
void linear(std::span<const T> x, std::span<const T> w, int tokens, int in, int out, std::span<T> y) {
    const T* xp = x.data();
    const T* wp = w.data();
    T* yp = y.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int t = 0; t < tokens; ++t) {
        for (int o = 0; o < out; ++o) {
            const T* wr = wp + static_cast<std::size_t>(o) * in;
            const T* xr = xp + static_cast<std::size_t>(t) * in;
            T acc = T(0);
            for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
            yp[static_cast<std::size_t>(t) * out + o] = acc;
        }
    }
}

template <typename T>
void rmsnorm(std::span<const T> x, std::span<const T> weight, int tokens, int dim, T eps, std::span<T> y) {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < tokens; ++t) {
        const std::size_t off = static_cast<std::size_t>(t) * dim;
        rmsnorm_vec<T>(x.subspan(off, dim), weight, eps, y.subspan(off, dim));
    }
}

template <typename T>
void rope(std::span<T> x, int tokens, int heads, int head_dim, double theta, bool inverse) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int t = 0; t < tokens; ++t)
        for (int h = 0; h < heads; ++h)
            rope_vec<T>(x.subspan((static_cast<std::size_t>(t) * heads + h) * head_dim, head_dim), t, theta,
                        inverse);
}

template <typename T>
void causal_attention(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                      const AttentionShape& s, std::span<T> out, std::span<T> probs) {
    const int hd = s.head_dim;
    const int group = s.num_heads / s.num_kv_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    const std::size_t q_stride = static_cast<std::size_t>(s.num_heads) * hd;
    const std::size_t kv_stride = static_cast<std::size_t>(s.num_kv_heads) * hd;
    const bool keep = !probs.empty();
#pragma omp parallel
    {
        std::vector<T> scores(s.tokens);
#pragma omp for collapse(2) schedule(static)
        for (int h = 0; h < s.num_heads; ++h) {
            for (int t = 0; t < s.tokens; ++t) {
                const int g = h / group;
                const T* qt = q.data() + t * q_stride + static_cast<std::size_t>(h) * hd;
                T mx = -INFINITY;
                for (int j = 0; j <= t; ++j) {
                    const T* kj = k.data() + j * kv_stride + static_cast<std::size_t>(g) * hd;
                    T acc = T(0);
                    for (int d = 0; d < hd; ++d) acc += qt[d] * kj[d];
                    scores[j] = acc * scale;
                    mx = std::max(mx, scores[j]);
                }
                T denom = T(0);
                for (int j = 0; j <= t; ++j) {
                    scores[j] = std::exp(scores[j] - mx);
                    denom += scores[j];
                }
                T* ot = out.data() + t * q_stride + static_cast<std::size_t>(h) * hd;
                std::fill(ot, ot + hd, T(0));
                T* prow = keep ? probs.data() + (static_cast<std::size_t>(h) * s.tokens + t) * s.tokens : nullptr;
                for (int j = 0; j <= t; ++j) {
                    const T p = scores[j] / denom;
                    if (prow) prow[j] = p;
                    const T* vj = v.data() + j * kv_stride + static_cast<std::size_t>(g) * hd;
                    for (int d = 0; d < hd; ++d) ot[d] += p * vj[d];
                }
                if (prow) std::fill(prow + t + 1, prow + s.tokens, T(0));
            }
        }
    }
}

#define MOEFORGE_INSTANTIATE(T)                                                                     \
    template void linear<T>(std::span<const T>, std::span<const T>, int, int, int, std::span<T>);  \
    template void rmsnorm<T>(std::span<const T>, std::span<const T>, int, int, T, std::span<T>);   \
    template void rope<T>(std::span<T>, int, int, int, double, bool);                               \
    template void causal_attention<T>(std::span<const T>, std::span<const T>, std::span<const T>,  \
                                      const AttentionShape&, std::span<T>, std::span<T>);

MOEFORGE_INSTANTIATE(float)
MOEFORGE_INSTANTIATE(double)
#undef MOEFORGE_INSTANTIATE

}  // namespace omp
}  // namespace moeforge::kernels
