// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/analysis.hpp"

#include <cstdio>
#include <map>
#include <ostream>

#include "moeforge/error.hpp"

namespace moeforge {

namespace {

using u64 = std::uint64_t;

struct Shapes {
    u64 embed, head, final_norm, norms_per_layer, attn_per_layer, ffn_per_layer;
};

Shapes shapes_of(const ArchDescriptor& a) {
    const u64 h = a.hidden_size, i = a.ffn_intermediate_size, v = a.vocab_size, kv = a.kv_dim();
    return {v * h, v * h, h, 2 * h, 2 * h * h + 2 * kv * h, 3 * h * i};
}

}  // namespace

std::uint64_t CostReport::total_flops_per_token() const {
    return ffn_flops_per_token + router_flops_per_token + attn_flops_per_token + lm_head_flops_per_token;
}

std::uint64_t CostReport::memory_bytes(DType dtype) const { return total_params * dtype_size(dtype); }

double CostReport::memory_gb(DType dtype) const { return static_cast<double>(memory_bytes(dtype)) / 1e9; }

CostReport cost_estimate(const ArchDescriptor& arch, const MoeRecipe& recipe, std::optional<int> lora_rank) {
    arch.validate();
    recipe.validate();
    const Shapes s = shapes_of(arch);
    const u64 layers = arch.num_layers;
    const u64 n = recipe.num_experts();
    const bool routed = recipe.routed();
    const u64 selected = routed ? static_cast<u64>(recipe.top_k) : n;

    u64 n_full = 0, n_lora = 0;
    for (const auto& e : recipe.experts) (e.kind == ExpertKind::Full ? n_full : n_lora)++;
    u64 lora_params = 0;
    if (n_lora > 0) {
        if (!lora_rank || *lora_rank < 1) throw Error("cost estimate of LoRA experts needs the adapter rank");
        const u64 r = *lora_rank, h = arch.hidden_size, i = arch.ffn_intermediate_size;
        lora_params = 3 * r * (h + i) * layers;
    }

    CostReport c;
    c.mode = std::string(to_string(recipe.gating));
    c.num_experts = static_cast<int>(n);
    c.top_k = routed ? recipe.top_k : static_cast<int>(n);
    c.per_expert_ffn_params = s.ffn_per_layer * layers;

    const u64 sites = (recipe.granularity == Granularity::Ffn ? 1 : 3) + (recipe.mix_attention ? 1 : 0);
    c.router_params = routed ? layers * sites * n * static_cast<u64>(arch.hidden_size) : 0;

    const u64 attn_blocks = recipe.mix_attention ? n : 1;
    const u64 attn_active = recipe.mix_attention ? selected : 1;
    const u64 shared = s.embed + s.head + s.final_norm + layers * s.norms_per_layer;
    const u64 base_ffn = n_lora > 0 ? c.per_expert_ffn_params : 0;

    c.total_params = shared + attn_blocks * layers * s.attn_per_layer + n_full * c.per_expert_ffn_params +
                     n_lora * lora_params + base_ffn + c.router_params;

    // Worst case over which experts get selected: full experts first.
    const u64 sel_full = std::min(selected, n_full);
    const u64 sel_adapters = selected - sel_full;
    const u64 active_ffn = sel_full * c.per_expert_ffn_params + sel_adapters * lora_params +
                           (sel_adapters > 0 ? base_ffn : 0);
    c.active_params_per_token = shared + attn_active * layers * s.attn_per_layer + active_ffn + c.router_params;

    c.ffn_flops_per_token = 2 * (sel_full * c.per_expert_ffn_params +
                                 sel_adapters * (c.per_expert_ffn_params + lora_params));
    c.router_flops_per_token = 2 * c.router_params;
    c.attn_flops_per_token = 2 * attn_active * layers * s.attn_per_layer;
    c.lm_head_flops_per_token = 2 * s.head;
    return c;
}

CostReport cost_estimate_dense(const ArchDescriptor& arch) {
    arch.validate();
    const Shapes s = shapes_of(arch);
    const u64 layers = arch.num_layers;
    CostReport c;
    c.mode = "dense";
    c.per_expert_ffn_params = s.ffn_per_layer * layers;
    c.total_params = s.embed + s.head + s.final_norm + layers * (s.norms_per_layer + s.attn_per_layer + s.ffn_per_layer);
    c.active_params_per_token = c.total_params;
    c.ffn_flops_per_token = 2 * c.per_expert_ffn_params;
    c.attn_flops_per_token = 2 * layers * s.attn_per_layer;
    c.lm_head_flops_per_token = 2 * s.head;
    return c;
}

CostComparison compare_cost_tables(const std::vector<CostReport>& reports, DType dtype, double budget_gb) {
    CostComparison out;
    std::vector<std::string> modes;
    std::map<std::string, std::vector<const CostReport*>> by_mode;
    for (const auto& r : reports) {
        CostGridRow row;
        row.mode = r.mode;
        row.num_experts = r.num_experts;
        row.total_params = r.total_params;
        row.active_params = r.active_params_per_token;
        row.ffn_flops = r.ffn_flops_per_token;
        row.router_flops = r.router_flops_per_token;
        row.memory_gb = r.memory_gb(dtype);
        row.over_budget = row.memory_gb > budget_gb;
        out.rows.push_back(row);
        if (!by_mode.contains(r.mode)) modes.push_back(r.mode);
        by_mode[r.mode].push_back(&r);
    }
    for (const auto& mode : modes) {
        const auto& rs = by_mode[mode];
        const CostReport& first = *rs.front();
        const CostReport& last = *rs.back();
        CostTrend t;
        t.mode = mode;
        t.first_n = first.num_experts;
        t.last_n = last.num_experts;
        t.total_flops_ratio =
            static_cast<double>(last.total_flops_per_token()) / static_cast<double>(first.total_flops_per_token());
        t.ffn_flops_ratio =
            static_cast<double>(last.ffn_flops_per_token) / static_cast<double>(first.ffn_flops_per_token);
        if (last.num_experts != first.num_experts)
            t.memory_gb_per_two_experts = (last.memory_gb(dtype) - first.memory_gb(dtype)) /
                                          (static_cast<double>(last.num_experts - first.num_experts) / 2.0);
        out.trends.push_back(t);
    }
    return out;
}

void write_cost_grid_csv(const std::vector<CostGridRow>& rows, std::ostream& out) {
    out << "mode,N,total_params,active_params,ffn_flops,router_flops,memory_gb,over_budget\n";
    char gb[32];
    for (const auto& r : rows) {
        std::snprintf(gb, sizeof gb, "%.6f", r.memory_gb);
        out << r.mode << ',' << r.num_experts << ',' << r.total_params << ',' << r.active_params << ','
            << r.ffn_flops << ',' << r.router_flops << ',' << gb << ',' << (r.over_budget ? "true" : "false") << '\n';
    }
}

HeatmapTable routing_heatmap(const RoutingTrace& trace, int num_experts, std::optional<Site> site) {
    if (trace.records.empty()) throw Error("empty routing trace");
    if (num_experts < 1) throw Error("heat map needs at least one expert");
    if (!site) {
        site = trace.records.front().site;
        for (const auto& r : trace.records)
            if (r.site != Site::Attn) {
                site = r.site;
                break;
            }
    }
    HeatmapTable t;
    t.site = *site;
    t.num_experts = num_experts;
    for (const auto& r : trace.records)
        if (r.site == *site) t.num_layers = std::max(t.num_layers, r.layer + 1);
    if (t.num_layers == 0) throw Error("empty routing trace for site " + std::string(to_string(*site)));
    std::vector<std::vector<std::uint64_t>> counts(t.num_layers, std::vector<std::uint64_t>(num_experts, 0));
    t.tokens.assign(t.num_layers, 0);
    for (const auto& r : trace.records) {
        if (r.site != *site) continue;
        if (r.top_expert < 0 || r.top_expert >= num_experts) throw Error("trace expert index out of range");
        ++counts[r.layer][r.top_expert];
        ++t.tokens[r.layer];
    }
    t.fraction.assign(t.num_layers, std::vector<double>(num_experts, 0.0));
    for (int l = 0; l < t.num_layers; ++l)
        for (int e = 0; e < num_experts; ++e)
            if (t.tokens[l] > 0)
                t.fraction[l][e] = static_cast<double>(counts[l][e]) / static_cast<double>(t.tokens[l]);
    return t;
}

void write_heatmap_csv(const HeatmapTable& table, std::ostream& out) {
    out << "layer,expert,fraction\n";
    for (int l = 0; l < table.num_layers; ++l)
        for (int e = 0; e < table.num_experts; ++e)
            out << l << ',' << e << ',' << format_double(table.fraction[l][e]) << '\n';
}

std::uint64_t checkpoint_params(const TensorMap& ckpt) { return ckpt.parameter_count(); }

}  // namespace moeforge
