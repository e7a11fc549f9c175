// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "moeforge/kernels.hpp"

namespace moeforge::kernels {

template <typename T>
void matvec(std::span<const T> w, int rows, int cols, std::span<const T> x, std::span<T> y) {
    for (int r = 0; r < rows; ++r) {
        const T* wr = w.data() + static_cast<std::size_t>(r) * cols;
        T acc = T(0);
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

template <typename T>
void matvec_t_acc(std::span<const T> w, int rows, int cols, std::span<const T> y, std::span<T> x) {
    for (int r = 0; r < rows; ++r) {
        const T* wr = w.data() + static_cast<std::size_t>(r) * cols;
        const T yr = y[r];
        if (yr == T(0)) continue;
        for (int c = 0; c < cols; ++c) x[c] += wr[c] * yr;
    }
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
    T acc = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
void rmsnorm_vec(std::span<const T> x, std::span<const T> weight, T eps, std::span<T> y) {
    T ss = T(0);
    for (T v : x) ss += v * v;
    const T inv = T(1) / std::sqrt(ss / static_cast<T>(x.size()) + eps);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * weight[i];
}

template <typename T>
void rope_vec(std::span<T> head, int pos, double theta, bool inverse) {
    const int d = static_cast<int>(head.size());
    const int half = d / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(theta, -2.0 * i / d);
        const double angle = (inverse ? -1.0 : 1.0) * pos * freq;
        const T c = static_cast<T>(std::cos(angle));
        const T s = static_cast<T>(std::sin(angle));
        const T x1 = head[i];
        const T x2 = head[i + half];
        head[i] = x1 * c - x2 * s;
        head[i + half] = x1 * s + x2 * c;
    }
}

namespace serial {

template <typename T>
void linear(std::span<const T> x, std::span<const T> w, int tokens, int in, int out, std::span<T> y) {
    for (int t = 0; t < tokens; ++t) {
        for (int o = 0; o < out; ++o) {
            T acc = T(0);
            for (int i = 0; i < in; ++i)
                acc += w[static_cast<std::size_t>(o) * in + i] * x[static_cast<std::size_t>(t) * in + i];
            y[static_cast<std::size_t>(t) * out + o] = acc;
        }
    }
}

template <typename T>
void rmsnorm(std::span<const T> x, std::span<const T> weight, int tokens, int dim, T eps, std::span<T> y) {
    for (int t = 0; t < tokens; ++t) {
        const std::size_t off = static_cast<std::size_t>(t) * dim;
        rmsnorm_vec<T>(x.subspan(off, dim), weight, eps, y.subspan(off, dim));
    }
}

template <typename T>
void rope(std::span<T> x, int tokens, int heads, int head_dim, double theta, bool inverse) {
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
    std::vector<T> scores(s.tokens);
    for (int h = 0; h < s.num_heads; ++h) {
        const int g = h / group;
        for (int t = 0; t < s.tokens; ++t) {
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
            for (int j = 0; j <= t; ++j) {
                const T p = scores[j] / denom;
                if (!probs.empty())
                    probs[(static_cast<std::size_t>(h) * s.tokens + t) * s.tokens + j] = p;
                const T* vj = v.data() + j * kv_stride + static_cast<std::size_t>(g) * hd;
                for (int d = 0; d < hd; ++d) ot[d] += p * vj[d];
            }
            if (!probs.empty())
                for (int j = t + 1; j < s.tokens; ++j)
                    probs[(static_cast<std::size_t>(h) * s.tokens + t) * s.tokens + j] = T(0);
        }
    }
}

}  // namespace serial

#define MOEFORGE_INSTANTIATE(T)                                                                         \
    template void matvec<T>(std::span<const T>, int, int, std::span<const T>, std::span<T>);           \
    template void matvec_t_acc<T>(std::span<const T>, int, int, std::span<const T>, std::span<T>);     \
    template T dot<T>(std::span<const T>, std::span<const T>);                                          \
    template void rmsnorm_vec<T>(std::span<const T>, std::span<const T>, T, std::span<T>);             \
    template void rope_vec<T>(std::span<T>, int, double, bool);                                         \
    template void serial::linear<T>(std::span<const T>, std::span<const T>, int, int, int, std::span<T>); \
    template void serial::rmsnorm<T>(std::span<const T>, std::span<const T>, int, int, T, std::span<T>); \
    template void serial::rope<T>(std::span<T>, int, int, int, double, bool);                           \
    template void serial::causal_attention<T>(std::span<const T>, std::span<const T>, std::span<const T>, \
                                              const AttentionShape&, std::span<T>, std::span<T>);

MOEFORGE_INSTANTIATE(float)
MOEFORGE_INSTANTIATE(double)
#undef MOEFORGE_INSTANTIATE

}  // namespace moeforge::kernels
