// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "moeforge/analysis.hpp"
#include "moeforge/compose.hpp"
#include "moeforge/error.hpp"
#include "tiny.hpp"

namespace moeforge {
namespace {

using testing::random_adapter;
using testing::random_dense;
using testing::random_tokens;
using testing::recipe_of;
using testing::tiny_arch;
using testing::with_new_ffn;

MoeRecipe mode(Gating g, int n, int k = 2) { return recipe_of(g, n, k); }

TEST(Cost, MistralPerExpertFfnParams) {
    const CostReport c = cost_estimate(mistral7b_arch(), mode(Gating::Noisy, 2));
    EXPECT_EQ(c.per_expert_ffn_params, 5'637'144'576ull);
    EXPECT_EQ(c.router_params, 32ull * 2 * 4096);
}

TEST(Cost, TwoExpertF16MemoryIncrement) {
    const double a = cost_estimate(mistral7b_arch(), mode(Gating::Gateless, 2)).memory_gb(DType::F16);
    const double b = cost_estimate(mistral7b_arch(), mode(Gating::Gateless, 4)).memory_gb(DType::F16);
    EXPECT_NEAR(b - a, 22.549, 0.0005);
    const double observed = 48.642 - 27.137;
    EXPECT_NEAR(observed, 21.505, 1e-9);
    EXPECT_LT(std::abs((b - a) - observed) / observed, 0.10);
}

TEST(Cost, GatelessFfnFlopsScaleWithN) {
    const auto a = mistral7b_arch();
    const auto c2 = cost_estimate(a, mode(Gating::Gateless, 2));
    const auto c4 = cost_estimate(a, mode(Gating::Gateless, 4));
    EXPECT_EQ(c4.ffn_flops_per_token, 2 * c2.ffn_flops_per_token);
    for (int n : {2, 4, 6, 8}) {
        const auto c = cost_estimate(a, mode(Gating::Gateless, n));
        EXPECT_EQ(c.ffn_flops_per_token * 2, c2.ffn_flops_per_token * n);
    }
}

TEST(Cost, NoisyTopTwoNearlyFlat) {
    const auto a = mistral7b_arch();
    const auto c2 = cost_estimate(a, mode(Gating::Noisy, 2));
    for (int n : {4, 6, 8}) {
        const auto c = cost_estimate(a, mode(Gating::Noisy, n));
        EXPECT_EQ(c.ffn_flops_per_token, c2.ffn_flops_per_token);
        EXPECT_EQ(c.router_flops_per_token - c2.router_flops_per_token, 2ull * 4096 * (n - 2) * 32);
        EXPECT_LT(static_cast<double>(c.total_flops_per_token()) / c2.total_flops_per_token(), 1.01);
    }
}

TEST(Cost, SingleGatelessExpertEqualsDense) {
    const auto a = mistral7b_arch();
    const auto moe = cost_estimate(a, mode(Gating::Gateless, 1, 1));
    const auto dense = cost_estimate_dense(a);
    EXPECT_EQ(moe.total_params, dense.total_params);
    EXPECT_EQ(moe.active_params_per_token, dense.active_params_per_token);
    EXPECT_EQ(moe.ffn_flops_per_token, dense.ffn_flops_per_token);
    EXPECT_EQ(moe.router_flops_per_token, 0u);
    EXPECT_EQ(moe.attn_flops_per_token, dense.attn_flops_per_token);
    EXPECT_EQ(moe.total_flops_per_token(), dense.total_flops_per_token());
}

TEST(Cost, ActiveParamInvariants) {
    const auto a = mistral7b_arch();
    for (int n : {1, 2, 3, 4, 6, 8})
        for (Gating g : {Gating::Gateless, Gating::Noisy, Gating::Trained}) {
            const int k = std::min(2, n);
            const auto c = cost_estimate(a, mode(g, n, k));
            EXPECT_LE(c.active_params_per_token, c.total_params);
            const std::uint64_t active_ffn = c.ffn_flops_per_token / 2;
            if (g == Gating::Gateless) EXPECT_EQ(active_ffn, n * c.per_expert_ffn_params);
            else EXPECT_EQ(active_ffn, k * c.per_expert_ffn_params);
        }
}

TEST(Cost, GatelessMemoryAffineInN) {
    const auto a = mistral7b_arch();
    std::vector<std::uint64_t> bytes;
    for (int n : {2, 4, 6, 8}) bytes.push_back(cost_estimate(a, mode(Gating::Gateless, n)).memory_bytes(DType::F16));
    for (std::size_t i = 2; i < bytes.size(); ++i) EXPECT_EQ(bytes[i] - bytes[i - 1], bytes[1] - bytes[0]);
}

TEST(Cost, GridFlagsEightExpertsOverBudget) {
    const auto a = mistral7b_arch();
    std::vector<CostReport> reports;
    for (Gating g : {Gating::Gateless, Gating::Noisy})
        for (int n : {2, 4, 6, 8}) reports.push_back(cost_estimate(a, mode(g, n)));
    const CostComparison cmp = compare_cost_tables(reports);
    ASSERT_EQ(cmp.rows.size(), 8u);
    for (const auto& r : cmp.rows) EXPECT_EQ(r.over_budget, r.num_experts == 8) << r.mode << r.num_experts;
    EXPECT_NEAR(cmp.rows[3].memory_gb, 93.403, 0.001);
    EXPECT_EQ(cmp.rows[0].ffn_flops, cmp.rows[4].ffn_flops);
    ASSERT_EQ(cmp.trends.size(), 2u);
    EXPECT_DOUBLE_EQ(cmp.trends[0].ffn_flops_ratio, 4.0);
    EXPECT_DOUBLE_EQ(cmp.trends[1].ffn_flops_ratio, 1.0);
    EXPECT_NEAR(cmp.trends[0].memory_gb_per_two_experts, 22.549, 0.0005);

    std::ostringstream csv;
    write_cost_grid_csv(cmp.rows, csv);
    std::istringstream in(csv.str());
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    EXPECT_EQ(header, "mode,N,total_params,active_params,ffn_flops,router_flops,memory_gb,over_budget");
    EXPECT_EQ(first.substr(0, 11), "gateless,2,");
    EXPECT_NE(first.find(",false"), std::string::npos);
}

TEST(Cost, MatchesComposedCheckpointExactly) {
    const TensorMap base = random_dense(tiny_arch(), 1);
    for (Gating g : {Gating::Gateless, Gating::Noisy})
        for (Granularity gr : {Granularity::Ffn, Granularity::Fgmlp})
            for (bool mix : {false, true})
                for (int n : {1, 2, 3}) {
                    const MoeRecipe r = recipe_of(g, n, 1, gr, mix);
                    std::vector<TensorMap> experts;
                    for (int i = 0; i < n; ++i) experts.push_back(with_new_ffn(base, 10 + i));
                    const TensorMap moe = compose_moe(base, r, experts);
                    EXPECT_EQ(cost_estimate(tiny_arch(), r).total_params, checkpoint_params(moe));
                }
}

TEST(Cost, LoraExpertsMatchComposedCheckpoint) {
    const TensorMap base = random_dense(tiny_arch(), 2);
    MoeRecipe r = recipe_of(Gating::Noisy, 3, 2);
    r.experts[1].kind = ExpertKind::Lora;
    r.experts[1].lora_alpha = 4.0;
    r.experts[2].kind = ExpertKind::Lora;
    r.experts[2].lora_alpha = 4.0;
    const TensorMap moe = compose_moe(
        base, r, std::vector<TensorMap>{with_new_ffn(base, 1), random_adapter(base, 2, 2), random_adapter(base, 2, 3)});
    EXPECT_EQ(cost_estimate(tiny_arch(), r, 2).total_params, checkpoint_params(moe));
    EXPECT_THROW(cost_estimate(tiny_arch(), r), Error);
}

// ---------------------------------------------------------------- heat maps

TEST(Heatmap, GatelessTiesGoToExpertZero) {
    const TensorMap base = random_dense(tiny_arch(), 3);
    const TensorMap moe = compose_moe(base, recipe_of(Gating::Gateless, 3), std::vector<TensorMap>{base, base, base});
    const auto res = model_forward(Model<double>::from_checkpoint(moe), random_tokens(20, 32, 1));
    const HeatmapTable t = routing_heatmap(res.trace, 3);
    ASSERT_EQ(t.num_layers, 2);
    for (int l = 0; l < 2; ++l) {
        EXPECT_EQ(t.fraction[l][0], 1.0);
        EXPECT_EQ(t.fraction[l][1], 0.0);
        EXPECT_EQ(t.tokens[l], 20u);
    }
}

TEST(Heatmap, ForcedExpertColumn) {
    const TensorMap base = random_dense(tiny_arch(), 4);
    MoeRecipe r = recipe_of(Gating::Noisy, 3, 1);
    r.always_on = 2;
    const TensorMap moe = compose_moe(base, r, std::vector<TensorMap>{with_new_ffn(base, 1), with_new_ffn(base, 2), base});
    const auto res = model_forward(Model<double>::from_checkpoint(moe), random_tokens(30, 32, 2));
    const HeatmapTable t = routing_heatmap(res.trace, 3);
    for (int l = 0; l < 2; ++l) {
        EXPECT_EQ(t.fraction[l][2], 1.0);
        EXPECT_EQ(t.fraction[l][0] + t.fraction[l][1], 0.0);
    }
}

TEST(Heatmap, RowStochasticOnRandomTraces) {
    const TensorMap base = random_dense(tiny_arch(), 5);
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        MoeRecipe r = recipe_of(Gating::Noisy, 4, 2, seed % 2 ? Granularity::Fgmlp : Granularity::Ffn, seed % 3 == 0, seed);
        r.noise_sigma = 1.0;
        std::vector<TensorMap> experts;
        for (int i = 0; i < 4; ++i) experts.push_back(with_new_ffn(base, 30 + i));
        const TensorMap moe = compose_moe(base, r, experts);
        const auto res = model_forward(Model<double>::from_checkpoint(moe), random_tokens(25, 32, seed));
        for (const Site s : {Site::Ffn, Site::FfnGate, Site::FfnDown, Site::Attn}) {
            bool present = false;
            for (const auto& rec : res.trace.records) present |= rec.site == s;
            if (!present) continue;
            const HeatmapTable t = routing_heatmap(res.trace, 4, s);
            for (int l = 0; l < t.num_layers; ++l) {
                double sum = 0.0;
                for (double f : t.fraction[l]) {
                    EXPECT_GE(f, 0.0);
                    EXPECT_LE(f, 1.0);
                    sum += f;
                }
                EXPECT_NEAR(sum, 1.0, 1e-9);
            }
        }
    }
}

TEST(Heatmap, EmptyTraceIsAnError) {
    EXPECT_THROW(routing_heatmap(RoutingTrace{}, 2), Error);
}

TEST(Heatmap, CsvFormat) {
    HeatmapTable t;
    t.num_layers = 1;
    t.num_experts = 2;
    t.fraction = {{0.25, 0.75}};
    t.tokens = {4};
    std::ostringstream s;
    write_heatmap_csv(t, s);
    EXPECT_EQ(s.str(), "layer,expert,fraction\n0,0,0.25\n0,1,0.75\n");
}

}  // namespace
}  // namespace moeforge
