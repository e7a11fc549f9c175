// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small random checkpoints shared by the unit and acceptance tests.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moeforge/arch.hpp"
#include "moeforge/recipe.hpp"
#include "moeforge/tensorstore.hpp"

namespace moeforge::testing {

/// 2 layers, hidden 8, intermediate 16, 2 heads over 1 kv head, vocab 32.
ArchDescriptor tiny_arch();

/// Dense checkpoint with N(0, scale^2) weights and norm weights near 1.
TensorMap random_dense(const ArchDescriptor& arch, std::uint64_t seed, DType dtype = DType::F64,
                       double scale = 0.3);

/// Copy of `base` whose FFN tensors are redrawn from `seed`.
TensorMap with_new_ffn(const TensorMap& base, std::uint64_t seed, double scale = 0.3);

/// Adapter with rank-r factors on every FFN projection.
TensorMap random_adapter(const TensorMap& base, int rank, std::uint64_t seed, double scale = 0.3);

MoeRecipe recipe_of(Gating gating, int n, int top_k = 2, Granularity g = Granularity::Ffn,
                    bool mix_attention = false, std::uint64_t seed = 7);

std::vector<int> random_tokens(int length, int vocab, std::uint64_t seed);

/// Draws `n` doubles from N(0, scale^2).
std::vector<double> normals(std::size_t n, std::uint64_t seed, double scale = 1.0);

}  // namespace moeforge::testing
