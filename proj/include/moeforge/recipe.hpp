// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// MoeRecipe: the full description of a composition. It is written into the
// composed checkpoint's metadata (moe.* keys) and can be read back from it,
// and it has a JSON file form used by the CLI.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "moeforge/tensorstore.hpp"

namespace moeforge {

enum class Gating : std::uint8_t { Gateless, Noisy, Trained, HiddenRepr };
enum class Granularity : std::uint8_t { Ffn, Fgmlp };
enum class ExpertKind : std::uint8_t { Full, Lora };

std::string_view to_string(Gating g);
std::string_view to_string(Granularity g);
std::string_view to_string(ExpertKind k);
Gating parse_gating(std::string_view s);
Granularity parse_granularity(std::string_view s);
ExpertKind parse_expert_kind(std::string_view s);

struct ExpertSpec {
    ExpertKind kind = ExpertKind::Full;
    /// Provenance string, usually the checkpoint path as written in the recipe.
    std::string source;
    /// LoRA scaling numerator; rank comes from the adapter's A matrices.
    std::optional<double> lora_alpha;
    /// Prompts for hidden-state router initialization.
    std::vector<std::string> positive_prompts;
    std::vector<std::string> negative_prompts;

    friend bool operator==(const ExpertSpec&, const ExpertSpec&) = default;
};

inline constexpr double kDefaultNoiseSigma = 0.01;

struct MoeRecipe {
    Gating gating = Gating::Gateless;
    int top_k = 2;
    double noise_sigma = kDefaultNoiseSigma;
    Granularity granularity = Granularity::Ffn;
    bool mix_attention = false;
    std::optional<int> always_on;
    std::uint64_t seed = 0;
    std::vector<ExpertSpec> experts;

    int num_experts() const { return static_cast<int>(experts.size()); }
    bool routed() const { return gating != Gating::Gateless; }

    /// Throws Error naming the violated invariant (N >= 1, 1 <= top_k <= N,
    /// always_on < N, sigma > 0, prompts present for hidden_repr, ...).
    void validate() const;

    friend bool operator==(const MoeRecipe&, const MoeRecipe&) = default;
};

/// Canonical moe.* metadata for a recipe (plus moe.lora.* when any expert is LoRA).
void write_recipe_metadata(const MoeRecipe& recipe, TensorMap::Metadata& meta,
                           std::optional<int> lora_rank = std::nullopt);
/// Inverse of write_recipe_metadata. Throws Error if moe.* keys are missing.
MoeRecipe read_recipe_metadata(const TensorMap::Metadata& meta);
bool has_recipe_metadata(const TensorMap::Metadata& meta);

nlohmann::json recipe_to_json(const MoeRecipe& recipe);
MoeRecipe recipe_from_json(const nlohmann::json& j);

std::string format_double(double v);

}  // namespace moeforge
