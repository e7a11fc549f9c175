// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Logits of checkpoints written by tests/oracles/make_fixtures.py, compared
// against that script's numpy forward pass.

#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "moeforge/runtime.hpp"

namespace moeforge {
namespace {

const nlohmann::json& golden() {
    static const nlohmann::json j = [] {
        std::ifstream f(std::string(MOEFORGE_FIXTURE_DIR) + "/golden_logits.json");
        return nlohmann::json::parse(f);
    }();
    return j;
}

class Golden : public ::testing::TestWithParam<std::string> {};

TEST_P(Golden, LogitsMatchIndependentForward) {
    const std::string name = GetParam();
    const TensorMap ckpt = load_checkpoint(std::string(MOEFORGE_FIXTURE_DIR) + "/golden_" + name + ".safetensors");
    const auto tokens = golden()["tokens"].get<std::vector<int>>();
    const auto expected = golden()[name].get<std::vector<std::vector<double>>>();
    ASSERT_EQ(tokens.size(), 16u);

    const auto res = model_forward(Model<double>::from_checkpoint(ckpt), tokens);
    ASSERT_EQ(res.logits.rows, 16);
    for (int t = 0; t < 16; ++t)
        for (int v = 0; v < res.logits.cols; ++v) EXPECT_NEAR(res.logits.at(t, v), expected[t][v], 1e-10);

    const auto res32 = model_forward(Model<float>::from_checkpoint(ckpt), tokens);
    for (int t = 0; t < 16; ++t)
        for (int v = 0; v < res32.logits.cols; ++v) EXPECT_NEAR(res32.logits.at(t, v), expected[t][v], 1e-4);

    if (golden().contains(name + "_top_expert")) {
        const auto tops = golden()[name + "_top_expert"].get<std::vector<int>>();
        ASSERT_EQ(tops.size(), res.trace.records.size());
        for (std::size_t i = 0; i < tops.size(); ++i) EXPECT_EQ(res.trace.records[i].top_expert, tops[i]);
    }
}

INSTANTIATE_TEST_SUITE_P(Fixtures, Golden, ::testing::Values("dense", "moe_ffn", "moe_fgmlp_attn"));

}  // namespace
}  // namespace moeforge
