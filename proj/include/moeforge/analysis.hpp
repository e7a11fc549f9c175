// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Closed-form cost model and routing heat maps.
//
// Parameter counts follow tensor shapes exactly. FLOPs per token use the
// matrix-vector convention (2 per weight touched); attention FLOPs cover the
// q/k/v/o projections only, not the sequence-length dependent score term.
// Memory is parameters times dtype width, reported in decimal GB.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "moeforge/arch.hpp"
#include "moeforge/recipe.hpp"
#include "moeforge/runtime.hpp"
#include "moeforge/tensorstore.hpp"

namespace moeforge {

struct CostReport {
    std::string mode;  // gating mode name, "dense" for a plain checkpoint
    int num_experts = 1;
    int top_k = 1;

    std::uint64_t total_params = 0;
    std::uint64_t active_params_per_token = 0;
    std::uint64_t ffn_flops_per_token = 0;
    std::uint64_t router_flops_per_token = 0;
    std::uint64_t attn_flops_per_token = 0;
    std::uint64_t lm_head_flops_per_token = 0;

    std::uint64_t per_expert_ffn_params = 0;
    std::uint64_t router_params = 0;

    std::uint64_t total_flops_per_token() const;
    std::uint64_t memory_bytes(DType dtype) const;
    double memory_gb(DType dtype) const;
};

/// `lora_rank` is required when the recipe has LoRA experts (every FFN
/// projection is assumed adapted).
CostReport cost_estimate(const ArchDescriptor& arch, const MoeRecipe& recipe,
                         std::optional<int> lora_rank = std::nullopt);
CostReport cost_estimate_dense(const ArchDescriptor& arch);

struct CostGridRow {
    std::string mode;
    int num_experts = 0;
    std::uint64_t total_params = 0;
    std::uint64_t active_params = 0;
    std::uint64_t ffn_flops = 0;
    std::uint64_t router_flops = 0;
    double memory_gb = 0.0;
    bool over_budget = false;
};

struct CostTrend {
    std::string mode;
    int first_n = 0;
    int last_n = 0;
    double total_flops_ratio = 0.0;  // last / first
    double ffn_flops_ratio = 0.0;
    double memory_gb_per_two_experts = 0.0;  // mean increment per 2 experts
};

struct CostComparison {
    std::vector<CostGridRow> rows;
    std::vector<CostTrend> trends;  // one per mode, in first-seen order
};

inline constexpr double kDefaultBudgetGb = 80.0;

/// Grid of the reports in order, with memory at `dtype` flagged against the budget.
CostComparison compare_cost_tables(const std::vector<CostReport>& reports, DType dtype = DType::F16,
                                   double budget_gb = kDefaultBudgetGb);

/// "mode,N,total_params,active_params,ffn_flops,router_flops,memory_gb,over_budget"
void write_cost_grid_csv(const std::vector<CostGridRow>& rows, std::ostream& out);

struct HeatmapTable {
    Site site = Site::Ffn;
    int num_layers = 0;
    int num_experts = 0;
    std::vector<std::vector<double>> fraction;  // [layer][expert]
    std::vector<std::uint64_t> tokens;          // per layer
};

/// Per-layer share of tokens whose top-weighted expert is each expert.
/// Without `site`, the first non-attention site in the trace is used.
HeatmapTable routing_heatmap(const RoutingTrace& trace, int num_experts, std::optional<Site> site = std::nullopt);

/// "layer,expert,fraction"
void write_heatmap_csv(const HeatmapTable& table, std::ostream& out);

/// Parameter count of a checkpoint from tensor shapes.
std::uint64_t checkpoint_params(const TensorMap& ckpt);

}  // namespace moeforge
