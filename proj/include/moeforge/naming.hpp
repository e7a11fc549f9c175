// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Canonical tensor names.
//
// Dense checkpoints:
//   embed.weight, lm_head.weight, final_norm.weight
//   layers.{l}.attn_norm.weight, layers.{l}.ffn_norm.weight
//   layers.{l}.attn.{q|k|v|o}.weight
//   layers.{l}.ffn.{gate|up|down}.weight
//
// MOE checkpoints add
//   layers.{l}.ffn.experts.{i}.{gate|up|down}.weight
//   layers.{l}.ffn.experts.{i}.{gate|up|down}.lora_{A|B}.weight
//   layers.{l}.ffn.router.weight | layers.{l}.ffn.router.{gate|up|down}.weight
//   layers.{l}.attn.experts.{i}.{q|k|v|o}.weight, layers.{l}.attn.router.weight
//
// LoRA adapter checkpoints use layers.{l}.ffn.{gate|up|down}.lora_{A|B}.weight.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "moeforge/tensorstore.hpp"

namespace moeforge {

enum class FfnProj : std::uint8_t { Gate, Up, Down };
enum class AttnProj : std::uint8_t { Q, K, V, O };

inline constexpr std::array<FfnProj, 3> kFfnProjs{FfnProj::Gate, FfnProj::Up, FfnProj::Down};
inline constexpr std::array<AttnProj, 4> kAttnProjs{AttnProj::Q, AttnProj::K, AttnProj::V, AttnProj::O};

std::string_view proj_name(FfnProj p);
std::string_view proj_name(AttnProj p);

namespace names {

inline constexpr std::string_view kEmbed = "embed.weight";
inline constexpr std::string_view kLmHead = "lm_head.weight";
inline constexpr std::string_view kFinalNorm = "final_norm.weight";

std::string layer_prefix(int layer);
std::string attn_norm(int layer);
std::string ffn_norm(int layer);
std::string attn(int layer, AttnProj p);
std::string attn_expert(int layer, int expert, AttnProj p);
std::string attn_router(int layer);
std::string ffn(int layer, FfnProj p);
std::string ffn_expert(int layer, int expert, FfnProj p);
std::string ffn_lora_a(int layer, int expert, FfnProj p);
std::string ffn_lora_b(int layer, int expert, FfnProj p);
std::string ffn_router(int layer);
std::string ffn_router(int layer, FfnProj p);
std::string adapter_a(int layer, FfnProj p);
std::string adapter_b(int layer, FfnProj p);

/// "layers.{l}." prefix parse; nullopt for non-layer names.
std::optional<int> layer_of(std::string_view name);
/// Expert slot of an "...experts.{i}..." name.
std::optional<int> expert_of(std::string_view name);

}  // namespace names

/// Maps a Mistral/Llama hub-named checkpoint (model.layers.N.mlp.gate_proj...)
/// or a PEFT adapter (base_model.model.model.layers.N.mlp.gate_proj.lora_A...)
/// onto canonical names. Names already canonical pass through; anything
/// unrecognized is an Error.
TensorMap canonicalize_names(const TensorMap& map);
/// Inverse of canonicalize_names for dense checkpoints.
TensorMap to_hub_names(const TensorMap& map);
/// True when any tensor uses hub naming.
bool uses_hub_names(const TensorMap& map);

}  // namespace moeforge
