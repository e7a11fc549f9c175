// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/naming.hpp"

#include <charconv>
#include <utility>
#include <vector>

#include "moeforge/error.hpp"

namespace moeforge {

std::string_view proj_name(FfnProj p) {
    switch (p) {
        case FfnProj::Gate: return "gate";
        case FfnProj::Up: return "up";
        case FfnProj::Down: return "down";
    }
    return "?";
}

std::string_view proj_name(AttnProj p) {
    switch (p) {
        case AttnProj::Q: return "q";
        case AttnProj::K: return "k";
        case AttnProj::V: return "v";
        case AttnProj::O: return "o";
    }
    return "?";
}

namespace names {

std::string layer_prefix(int layer) { return "layers." + std::to_string(layer) + "."; }
std::string attn_norm(int layer) { return layer_prefix(layer) + "attn_norm.weight"; }
std::string ffn_norm(int layer) { return layer_prefix(layer) + "ffn_norm.weight"; }

std::string attn(int layer, AttnProj p) {
    return layer_prefix(layer) + "attn." + std::string(proj_name(p)) + ".weight";
}
std::string attn_expert(int layer, int expert, AttnProj p) {
    return layer_prefix(layer) + "attn.experts." + std::to_string(expert) + "." +
           std::string(proj_name(p)) + ".weight";
}
std::string attn_router(int layer) { return layer_prefix(layer) + "attn.router.weight"; }

std::string ffn(int layer, FfnProj p) {
    return layer_prefix(layer) + "ffn." + std::string(proj_name(p)) + ".weight";
}
std::string ffn_expert(int layer, int expert, FfnProj p) {
    return layer_prefix(layer) + "ffn.experts." + std::to_string(expert) + "." +
           std::string(proj_name(p)) + ".weight";
}
std::string ffn_lora_a(int layer, int expert, FfnProj p) {
    return layer_prefix(layer) + "ffn.experts." + std::to_string(expert) + "." +
           std::string(proj_name(p)) + ".lora_A.weight";
}
std::string ffn_lora_b(int layer, int expert, FfnProj p) {
    return layer_prefix(layer) + "ffn.experts." + std::to_string(expert) + "." +
           std::string(proj_name(p)) + ".lora_B.weight";
}
std::string ffn_router(int layer) { return layer_prefix(layer) + "ffn.router.weight"; }
std::string ffn_router(int layer, FfnProj p) {
    return layer_prefix(layer) + "ffn.router." + std::string(proj_name(p)) + ".weight";
}
std::string adapter_a(int layer, FfnProj p) {
    return layer_prefix(layer) + "ffn." + std::string(proj_name(p)) + ".lora_A.weight";
}
std::string adapter_b(int layer, FfnProj p) {
    return layer_prefix(layer) + "ffn." + std::string(proj_name(p)) + ".lora_B.weight";
}

namespace {
std::optional<int> leading_int(std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr == s.data()) return std::nullopt;
    if (ptr != s.data() + s.size() && *ptr != '.') return std::nullopt;
    return v;
}
}  // namespace

std::optional<int> layer_of(std::string_view name) {
    constexpr std::string_view prefix = "layers.";
    if (!name.starts_with(prefix)) return std::nullopt;
    return leading_int(name.substr(prefix.size()));
}

std::optional<int> expert_of(std::string_view name) {
    constexpr std::string_view marker = ".experts.";
    auto pos = name.find(marker);
    if (pos == std::string_view::npos) return std::nullopt;
    return leading_int(name.substr(pos + marker.size()));
}

}  // namespace names

namespace {

// hub suffix (after "model.layers.{l}.") -> canonical suffix (after "layers.{l}.")
const std::vector<std::pair<std::string_view, std::string_view>>& layer_table() {
    static const std::vector<std::pair<std::string_view, std::string_view>> table{
        {"input_layernorm.weight", "attn_norm.weight"},
        {"post_attention_layernorm.weight", "ffn_norm.weight"},
        {"self_attn.q_proj.weight", "attn.q.weight"},
        {"self_attn.k_proj.weight", "attn.k.weight"},
        {"self_attn.v_proj.weight", "attn.v.weight"},
        {"self_attn.o_proj.weight", "attn.o.weight"},
        {"mlp.gate_proj.weight", "ffn.gate.weight"},
        {"mlp.up_proj.weight", "ffn.up.weight"},
        {"mlp.down_proj.weight", "ffn.down.weight"},
        {"mlp.gate_proj.lora_A.weight", "ffn.gate.lora_A.weight"},
        {"mlp.gate_proj.lora_B.weight", "ffn.gate.lora_B.weight"},
        {"mlp.up_proj.lora_A.weight", "ffn.up.lora_A.weight"},
        {"mlp.up_proj.lora_B.weight", "ffn.up.lora_B.weight"},
        {"mlp.down_proj.lora_A.weight", "ffn.down.lora_A.weight"},
        {"mlp.down_proj.lora_B.weight", "ffn.down.lora_B.weight"},
    };
    return table;
}

const std::vector<std::pair<std::string_view, std::string_view>>& global_table() {
    static const std::vector<std::pair<std::string_view, std::string_view>> table{
        {"model.embed_tokens.weight", "embed.weight"},
        {"model.norm.weight", "final_norm.weight"},
        {"lm_head.weight", "lm_head.weight"},
    };
    return table;
}

std::optional<std::string> hub_to_canonical(std::string_view name) {
    for (std::string_view prefix : {"base_model.model.", ""}) {
        if (!name.starts_with(prefix)) continue;
        std::string_view rest = name.substr(prefix.size());
        for (const auto& [hub, canon] : global_table())
            if (rest == hub) return std::string(canon);
        constexpr std::string_view layers = "model.layers.";
        if (!rest.starts_with(layers)) continue;
        rest.remove_prefix(layers.size());
        auto dot = rest.find('.');
        if (dot == std::string_view::npos) return std::nullopt;
        std::string_view index = rest.substr(0, dot);
        std::string_view suffix = rest.substr(dot + 1);
        for (const auto& [hub, canon] : layer_table())
            if (suffix == hub)
                return "layers." + std::string(index) + "." + std::string(canon);
        return std::nullopt;
    }
    return std::nullopt;
}

std::optional<std::string> canonical_to_hub(std::string_view name) {
    for (const auto& [hub, canon] : global_table())
        if (name == canon) return std::string(hub);
    auto layer = names::layer_of(name);
    if (!layer) return std::nullopt;
    std::string_view suffix = name.substr(names::layer_prefix(*layer).size());
    for (const auto& [hub, canon] : layer_table())
        if (suffix == canon) return "model.layers." + std::to_string(*layer) + "." + std::string(hub);
    return std::nullopt;
}

}  // namespace

bool uses_hub_names(const TensorMap& map) {
    for (const auto& [name, t] : map.tensors())
        if (name.starts_with("model.") || name.starts_with("base_model.")) return true;
    return false;
}

TensorMap canonicalize_names(const TensorMap& map) {
    if (!uses_hub_names(map)) return map;
    TensorMap out;
    for (const auto& [name, t] : map.tensors()) {
        auto canon = hub_to_canonical(name);
        if (!canon) throw Error("unrecognized hub tensor name: " + name);
        out.insert(*canon, t);
    }
    out.metadata() = map.metadata();
    return out;
}

TensorMap to_hub_names(const TensorMap& map) {
    TensorMap out;
    for (const auto& [name, t] : map.tensors()) {
        auto hub = canonical_to_hub(name);
        if (!hub) throw Error("no hub name for tensor: " + name);
        out.insert(*hub, t);
    }
    out.metadata() = map.metadata();
    return out;
}

}  // namespace moeforge
