// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "moeforge/tensorstore.hpp"

namespace moeforge {

struct ArchDescriptor {
    int num_layers = 0;
    int hidden_size = 0;
    int ffn_intermediate_size = 0;
    int num_heads = 0;
    int num_kv_heads = 0;
    int vocab_size = 0;
    double norm_eps = 1e-5;
    double rope_theta = 10000.0;

    int head_dim() const { return hidden_size / num_heads; }
    int kv_dim() const { return head_dim() * num_kv_heads; }

    /// Throws Error naming the first violated dimension constraint.
    void validate() const;

    friend bool operator==(const ArchDescriptor&, const ArchDescriptor&) = default;
};

// Metadata keys describing what cannot be read off tensor shapes.
inline constexpr const char* kMetaNumHeads = "arch.num_heads";
inline constexpr const char* kMetaNumKvHeads = "arch.num_kv_heads";
inline constexpr const char* kMetaNormEps = "arch.norm_eps";
inline constexpr const char* kMetaRopeTheta = "arch.rope_theta";

/// Reads the descriptor from canonical tensor names and shapes. Works on
/// dense checkpoints and composed MOE checkpoints alike. num_heads comes
/// from "arch.num_heads" metadata; num_kv_heads from the k-projection rows.
ArchDescriptor infer_arch(const TensorMap& ckpt);

/// Writes the arch.* metadata keys.
void write_arch_metadata(const ArchDescriptor& arch, TensorMap::Metadata& meta);

struct ArchMismatch {
    std::string field;
    long long base_value = 0;
    int expert_index = 0;
    long long expert_value = 0;

    friend bool operator==(const ArchMismatch&, const ArchMismatch&) = default;
};

struct CompatReport {
    bool compatible = true;
    std::vector<ArchMismatch> mismatches;
    /// vocab_size differences tolerated because embeddings stay base-owned.
    std::vector<ArchMismatch> warnings;

    std::string describe() const;
};

/// Every field must match except vocab_size, which is only a warning unless
/// embeddings are going to be trained.
CompatReport check_compatibility(const ArchDescriptor& base,
                                 const std::vector<ArchDescriptor>& experts,
                                 bool embeddings_trained = false);

/// Mistral-7B public dims (32 layers, hidden 4096, intermediate 14336,
/// 32 heads, 8 kv heads, vocab 32000).
ArchDescriptor mistral7b_arch();

}  // namespace moeforge
