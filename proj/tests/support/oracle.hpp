// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Straight-line scalar reference implementations. Nothing here calls into the
// library's kernels; every matrix is a vector of rows and every loop is
// written out.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "moeforge/runtime.hpp"

namespace moeforge::oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat rows_of(const Matrix<double>& m) {
    Mat out(m.rows, Vec(m.cols));
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) out[r][c] = m.data[static_cast<std::size_t>(r) * m.cols + c];
    return out;
}

inline Vec mul(const Mat& w, const Vec& x) {
    Vec y(w.size(), 0.0);
    for (std::size_t r = 0; r < w.size(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) acc += w[r][c] * x[c];
        y[r] = acc;
    }
    return y;
}

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }

inline Vec ffn(const Mat& g, const Mat& u, const Mat& d, const Vec& x) {
    const Vec gx = mul(g, x);
    const Vec ux = mul(u, x);
    Vec act(gx.size());
    for (std::size_t i = 0; i < gx.size(); ++i) act[i] = silu(gx[i]) * ux[i];
    return mul(d, act);
}

struct Choice {
    std::vector<int> order;
    Vec weights;
};

/// Exhaustive search over every K-subset containing always_on: the winner has
/// the lexicographically best (descending logit, ascending index) remainder.
inline Choice select(const Vec& logits, int k, std::optional<int> always_on) {
    const int n = static_cast<int>(logits.size());
    std::vector<std::pair<double, int>> best;
    bool found = false;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (__builtin_popcount(mask) != k) continue;
        if (always_on && !(mask & (1u << *always_on))) continue;
        std::vector<std::pair<double, int>> rest;
        for (int i = 0; i < n; ++i)
            if ((mask & (1u << i)) && (!always_on || i != *always_on)) rest.push_back({-logits[i], i});
        std::sort(rest.begin(), rest.end());
        if (!found || rest < best) {
            best = rest;
            found = true;
        }
    }
    Choice c;
    if (always_on) c.order.push_back(*always_on);
    for (const auto& [neg, i] : best) c.order.push_back(i);
    double mx = -1e300;
    for (int i : c.order) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (int i : c.order) z += std::exp(logits[i] - mx);
    for (int i : c.order) c.weights.push_back(std::exp(logits[i] - mx) / z);
    return c;
}

struct Expert {
    Mat gate, up, down;
};

inline Vec moe_ffn(const std::vector<Expert>& experts, const Mat* router, const Vec& x, int k,
                   std::optional<int> always_on) {
    const int n = static_cast<int>(experts.size());
    Choice c;
    if (router == nullptr) {
        for (int i = 0; i < n; ++i) {
            c.order.push_back(i);
            c.weights.push_back(1.0 / n);
        }
    } else {
        c = select(mul(*router, x), k, always_on);
    }
    Vec y(x.size(), 0.0);
    for (std::size_t j = 0; j < c.order.size(); ++j) {
        const Expert& e = experts[c.order[j]];
        const Vec f = ffn(e.gate, e.up, e.down, x);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += c.weights[j] * f[i];
    }
    return y;
}

inline Vec fgmlp(const std::vector<Expert>& experts, const Mat& rg, const Mat& ru, const Mat& rd, const Vec& x,
                 int k, std::optional<int> always_on) {
    const Choice cg = select(mul(rg, x), k, always_on);
    const Choice cu = select(mul(ru, x), k, always_on);
    const Choice cd = select(mul(rd, x), k, always_on);
    const std::size_t inter = experts[0].gate.size();
    Vec g(inter, 0.0), u(inter, 0.0);
    for (std::size_t j = 0; j < cg.order.size(); ++j) {
        const Vec v = mul(experts[cg.order[j]].gate, x);
        for (std::size_t i = 0; i < inter; ++i) g[i] += cg.weights[j] * v[i];
    }
    for (std::size_t j = 0; j < cu.order.size(); ++j) {
        const Vec v = mul(experts[cu.order[j]].up, x);
        for (std::size_t i = 0; i < inter; ++i) u[i] += cu.weights[j] * v[i];
    }
    Vec act(inter);
    for (std::size_t i = 0; i < inter; ++i) act[i] = silu(g[i]) * u[i];
    Vec y(x.size(), 0.0);
    for (std::size_t j = 0; j < cd.order.size(); ++j) {
        const Vec v = mul(experts[cd.order[j]].down, act);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += cd.weights[j] * v[i];
    }
    return y;
}

/// W + scale * B A, materialized.
inline Mat merged(const Mat& w, const Mat& a, const Mat& b, double scale) {
    Mat out = w;
    for (std::size_t r = 0; r < w.size(); ++r)
        for (std::size_t c = 0; c < w[0].size(); ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < a.size(); ++j) acc += b[r][j] * a[j][c];
            out[r][c] += scale * acc;
        }
    return out;
}

}  // namespace moeforge::oracle
