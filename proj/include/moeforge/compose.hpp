// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Composition of MOE checkpoints from a dense base and expert sources, router
// initialization, and expert hot-swap.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moeforge/arch.hpp"
#include "moeforge/recipe.hpp"
#include "moeforge/runtime.hpp"
#include "moeforge/tensorstore.hpp"

namespace moeforge {

/// One router matrix (N x hidden, row-major) at a routed site.
struct RouterSite {
    int layer = 0;
    Site site = Site::Ffn;
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    std::string tensor_name() const;
};

/// Sites ordered by (layer, ffn sites, attention).
struct RouterBank {
    std::vector<RouterSite> sites;
};

/// Stream key of a router site for the noise generator: layer * 8 + code with
/// ffn = 0, ffn.gate = 1, ffn.up = 2, ffn.down = 3, attn = 4.
std::uint64_t router_stream_key(int layer, Site site);

struct RouterInitRequest {
    Gating mode = Gating::Noisy;
    Granularity granularity = Granularity::Ffn;
    bool mix_attention = false;
    double sigma = kDefaultNoiseSigma;
    std::uint64_t seed = 0;
    /// One entry per expert; required for hidden_repr.
    const std::vector<PromptHiddenStats>* activations = nullptr;
};

/// Gate-less requests yield an empty bank. Noisy and trained draw every entry
/// from N(0, sigma^2) on the keyed stream of its site. Hidden-state rows are
/// normalize(mean_pos - mean_neg) for each expert and layer.
RouterBank init_router(const RouterInitRequest& request, const ArchDescriptor& arch, int n_experts);

using PromptEncoder = std::function<std::vector<int>(const std::string&, int vocab_size)>;

/// Byte tokenizer without BOS; byte ids are folded modulo a vocabulary
/// smaller than 256.
std::vector<int> default_prompt_encoder(const std::string& text, int vocab_size);

struct ComposeOptions {
    /// Turns a vocab_size mismatch into an error instead of a warning.
    bool embeddings_trained = false;
    PromptEncoder encode_prompt = default_prompt_encoder;
};

/// `experts[i]` is the checkpoint for recipe.experts[i]: a dense checkpoint for
/// full experts, an adapter (layers.{l}.ffn.{p}.lora_{A|B}.weight) for LoRA
/// experts. Inputs are not modified; the output depends only on the inputs.
TensorMap compose_moe(const TensorMap& base, const MoeRecipe& recipe, std::span<const TensorMap> experts,
                      const ComposeOptions& options = {});

/// Dense checkpoint with W_p + (alpha / r) B_p A_p on every adapted projection,
/// stored in the base dtype.
TensorMap merge_lora(const TensorMap& base, const TensorMap& adapter, double alpha);

/// LoRA rank shared by every factor of an adapter; Error when the adapter is
/// empty, malformed, or adapts a tensor the base does not have.
int validate_adapter(const TensorMap& base, const TensorMap& adapter);

struct SwapSource {
    ExpertKind kind = ExpertKind::Full;
    std::string source;
    std::optional<double> lora_alpha;
    std::vector<std::string> positive_prompts;
    std::vector<std::string> negative_prompts;
};

/// Replaces the tensors of one expert slot and its moe.expert.{slot}.* keys.
/// Routers, other experts and base tensors are left untouched.
TensorMap swap_expert(const TensorMap& moe, int slot, const TensorMap& source, const SwapSource& spec);

/// Dense checkpoint holding the base tensors of `moe` and the FFN (and
/// attention, when mixed) of one full expert slot.
TensorMap extract_expert(const TensorMap& moe, int slot);

}  // namespace moeforge
