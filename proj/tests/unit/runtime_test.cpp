// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "moeforge/compose.hpp"
#include "moeforge/error.hpp"
#include "moeforge/naming.hpp"
#include "moeforge/rng.hpp"
#include "moeforge/runtime.hpp"
#include "oracle.hpp"
#include "tiny.hpp"

namespace moeforge {
namespace {

using testing::normals;
using testing::random_dense;
using testing::random_tokens;
using testing::recipe_of;
using testing::tiny_arch;

Matrix<double> mat(int r, int c, std::vector<double> v) {
    Matrix<double> m(r, c);
    m.data = std::move(v);
    return m;
}

Projection<double> proj(Matrix<double> m) { return {std::make_shared<const Matrix<double>>(std::move(m)), {}}; }

FfnWeights<double> scalar_ffn(double g, double u, double d) {
    return {proj(mat(1, 1, {g})), proj(mat(1, 1, {u})), proj(mat(1, 1, {d}))};
}

TensorMap compose_of(const TensorMap& base, const MoeRecipe& r, const std::vector<TensorMap>& experts) {
    return compose_moe(base, r, experts);
}

// ---------------------------------------------------------------- ffn_forward

TEST(FfnForward, HandComputedScalar) {
    const std::vector<double> x{1.0};
    const auto y = ffn_forward<double>(mat(1, 1, {1}), mat(1, 1, {2}), mat(1, 1, {1}), x);
    EXPECT_NEAR(y[0], 1.4621172, 1e-7);
    EXPECT_NEAR(y[0], 2.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(FfnForward, ZeroInputGivesZero) {
    const auto g = normals(16 * 8, 1), u = normals(16 * 8, 2), d = normals(8 * 16, 3);
    const std::vector<double> x(8, 0.0);
    const auto y = ffn_forward<double>(mat(16, 8, g), mat(16, 8, u), mat(8, 16, d), x);
    for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(FfnForward, MatchesScalarOracle) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = mat(16, 8, normals(128, seed * 4 + 1)), u = mat(16, 8, normals(128, seed * 4 + 2));
        const auto d = mat(8, 16, normals(128, seed * 4 + 3));
        const auto x = normals(8, seed * 4 + 4);
        const auto y = ffn_forward<double>(g, u, d, x);
        const auto ref = oracle::ffn(oracle::rows_of(g), oracle::rows_of(u), oracle::rows_of(d), x);
        for (int i = 0; i < 8; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    }
}

TEST(FfnForward, ShapeMismatch) {
    const std::vector<double> x{1.0, 2.0};
    EXPECT_THROW(ffn_forward<double>(mat(1, 1, {1}), mat(1, 1, {2}), mat(1, 1, {1}), x), Error);
}

// ---------------------------------------------------------------- gate

TEST(Gate, GatelessEqualWeights) {
    const std::vector<double> x{0.3, -2.0};
    const GateDecision d = gate<double>(nullptr, 3, x, {true, 2, std::nullopt});
    EXPECT_EQ(d.indices, (std::vector<int>{0, 1, 2}));
    for (double w : d.weights) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);
    EXPECT_EQ(d.top_expert(), 0);
}

TEST(Gate, ZeroRouterSplitsEvenly) {
    const auto r = mat(2, 2, {0, 0, 0, 0});
    const std::vector<double> x{1.0, 5.0};
    const GateDecision d = gate<double>(&r, 2, x, {false, 2, std::nullopt});
    EXPECT_EQ(d.indices, (std::vector<int>{0, 1}));
    EXPECT_DOUBLE_EQ(d.weights[0], 0.5);
    EXPECT_DOUBLE_EQ(d.weights[1], 0.5);
}

TEST(Gate, HandComputedTopTwo) {
    const auto r = mat(3, 2, {0.01, -0.02, 0, 0, -0.01, 0.02});
    const std::vector<double> x{1.0, 1.0};
    const GateDecision d = gate<double>(&r, 3, x, {false, 2, std::nullopt});
    EXPECT_EQ(d.indices, (std::vector<int>{2, 1}));
    EXPECT_NEAR(d.weights[0], 0.502500, 5e-7);
    EXPECT_NEAR(d.weights[1], 0.497500, 5e-7);
    const auto ref = oracle::select({-0.01, 0.0, 0.01}, 2, std::nullopt);
    EXPECT_EQ(ref.order, d.indices);
    EXPECT_NEAR(ref.weights[0], d.weights[0], 1e-15);
}

TEST(Gate, AlwaysOnIsKept) {
    const auto r = mat(3, 1, {-5, 1, 2});
    const std::vector<double> x{1.0};
    const GateDecision d = gate<double>(&r, 3, x, {false, 2, 0});
    EXPECT_EQ(d.indices, (std::vector<int>{0, 2}));
    EXPECT_NEAR(d.weights[0], 0.000911, 5e-7);
    EXPECT_NEAR(d.weights[1], 0.999089, 5e-7);
    EXPECT_EQ(d.top_expert(), 2);
}

TEST(Gate, TopKExceedingExpertsIsAnError) {
    const auto r = mat(2, 1, {1, 2});
    const std::vector<double> x{1.0};
    EXPECT_THROW(gate<double>(&r, 2, x, {false, 3, std::nullopt}), Error);
}

TEST(Gate, TiesGoToLowerIndex) {
    const auto r = mat(4, 1, {1, 3, 3, 3});
    const std::vector<double> x{1.0};
    const GateDecision d = gate<double>(&r, 4, x, {false, 2, std::nullopt});
    EXPECT_EQ(d.indices, (std::vector<int>{1, 2}));
    EXPECT_EQ(d.top_expert(), 1);
}

TEST(Gate, SimplexAndOracleAgreementOnRandomRouters) {
    SplitMix64 rng(17);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(6));
        const int k = 1 + static_cast<int>(rng.below(n));
        std::optional<int> always_on;
        if (rng.below(2)) always_on = static_cast<int>(rng.below(n));
        const auto r = mat(n, 4, normals(n * 4, rng.next()));
        const auto x = normals(4, rng.next());
        const GateDecision d = gate<double>(&r, n, x, {false, k, always_on});
        ASSERT_EQ(static_cast<int>(d.indices.size()), k);
        double sum = 0.0;
        for (double w : d.weights) {
            EXPECT_GE(w, 0.0);
            sum += w;
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
        std::vector<int> sorted = d.indices;
        std::sort(sorted.begin(), sorted.end());
        EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
        if (always_on) EXPECT_NE(std::find(d.indices.begin(), d.indices.end(), *always_on), d.indices.end());
        const auto ref = oracle::select(oracle::mul(oracle::rows_of(r), x), k, always_on);
        EXPECT_EQ(ref.order, d.indices);
        for (int j = 0; j < k; ++j) EXPECT_NEAR(ref.weights[j], d.weights[j], 1e-12);
    }
}

TEST(Gate, PositiveScalingKeepsSelection) {
    SplitMix64 rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(5));
        const int k = 1 + static_cast<int>(rng.below(n));
        auto r = mat(n, 6, normals(n * 6, rng.next()));
        const auto x = normals(6, rng.next());
        const auto before = gate<double>(&r, n, x, {false, k, std::nullopt});
        const double c = std::exp(4.0 * rng.uniform() - 2.0);
        for (double& v : r.data) v *= c;
        const auto after = gate<double>(&r, n, x, {false, k, std::nullopt});
        EXPECT_EQ(before.indices, after.indices);
    }
}

// ---------------------------------------------------------------- moe_ffn_forward

TEST(MoeFfn, IdenticalGatelessExpertsEqualSingleExpert) {
    const TensorMap base = random_dense(tiny_arch(), 4);
    const TensorMap moe = compose_of(base, recipe_of(Gating::Gateless, 3), {base, base, base});
    const auto model = Model<double>::from_checkpoint(moe);
    const auto x = normals(8, 9);
    const auto [y, d] = moe_ffn_forward(model.layers[0], std::span<const double>(x), model.gate_config());
    const auto ref = ffn_forward(model.layers[0].experts[0], std::span<const double>(x));
    for (int i = 0; i < 8; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    EXPECT_EQ(d.indices.size(), 3u);
}

oracle::Expert expert_of(const FfnWeights<double>& f) {
    return {oracle::rows_of(*f.gate.weight), oracle::rows_of(*f.up.weight), oracle::rows_of(*f.down.weight)};
}

TEST(MoeFfn, NoisyTopTwoMatchesOracle) {
    const TensorMap base = random_dense(tiny_arch(), 5);
    MoeRecipe r = recipe_of(Gating::Noisy, 2);
    r.noise_sigma = 0.5;
    const TensorMap moe = compose_of(base, r, {testing::with_new_ffn(base, 1), testing::with_new_ffn(base, 2)});
    const auto model = Model<double>::from_checkpoint(moe);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto x = normals(8, 100 + s);
        const auto& layer = model.layers[1];
        const auto [y, d] = moe_ffn_forward(layer, std::span<const double>(x), model.gate_config());
        const auto router = oracle::rows_of(layer.ffn_routers[0]);
        const auto ref = oracle::moe_ffn({expert_of(layer.experts[0]), expert_of(layer.experts[1])}, &router, x, 2,
                                         std::nullopt);
        for (int i = 0; i < 8; ++i) EXPECT_NEAR(y[i], ref[i], 1e-10);
    }
}

TEST(MoeFfn, SparsityCounterEqualsK) {
    const TensorMap base = random_dense(tiny_arch(), 6);
    std::vector<TensorMap> experts;
    for (int i = 0; i < 4; ++i) experts.push_back(testing::with_new_ffn(base, 10 + i));
    const TensorMap moe = compose_of(base, recipe_of(Gating::Noisy, 4, 2), experts);
    const auto model = Model<double>::from_checkpoint(moe);
    EvalCounter counter;
    const auto x = normals(8, 3);
    moe_ffn_forward(model.layers[0], std::span<const double>(x), model.gate_config(), &counter);
    EXPECT_EQ(counter.expert_ffn.load(), 2u);

    EvalCounter whole;
    const auto tokens = random_tokens(7, 32, 1);
    model_forward(model, tokens, &whole);
    EXPECT_EQ(whole.expert_ffn.load(), 2u * 7u * 2u);
}

// ---------------------------------------------------------------- fgmlp_forward

TEST(Fgmlp, OneHotRoutersDegenerateToSingleExpert) {
    const TensorMap base = random_dense(tiny_arch(), 7);
    const TensorMap moe = compose_of(base, recipe_of(Gating::Noisy, 3, 1, Granularity::Fgmlp),
                                     {testing::with_new_ffn(base, 1), testing::with_new_ffn(base, 2),
                                      testing::with_new_ffn(base, 3)});
    auto model = Model<double>::from_checkpoint(moe);
    const auto x = normals(8, 4);
    for (int j = 0; j < 3; ++j) {
        auto layer = model.layers[0];
        for (auto& r : layer.ffn_routers) {
            std::fill(r.data.begin(), r.data.end(), 0.0);
            for (int c = 0; c < 8; ++c) r.at(j, c) = x[c] > 0 ? 1e3 : -1e3;
        }
        const auto [y, ds] = fgmlp_forward(layer, std::span<const double>(x), model.gate_config());
        const auto ref = ffn_forward(layer.experts[j], std::span<const double>(x));
        for (int i = 0; i < 8; ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
        for (const auto& d : ds) EXPECT_EQ(d.top_expert(), j);
    }
}

TEST(Fgmlp, IdenticalExpertsAnyRouters) {
    const TensorMap base = random_dense(tiny_arch(), 8);
    MoeRecipe r = recipe_of(Gating::Noisy, 3, 2, Granularity::Fgmlp);
    r.noise_sigma = 1.0;
    const TensorMap moe = compose_of(base, r, {base, base, base});
    const auto model = Model<double>::from_checkpoint(moe);
    const auto x = normals(8, 5);
    const auto [y, ds] = fgmlp_forward(model.layers[1], std::span<const double>(x), model.gate_config());
    const auto ref = ffn_forward(model.layers[1].experts[0], std::span<const double>(x));
    for (int i = 0; i < 8; ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
}

TEST(Fgmlp, MatchesOracle) {
    const TensorMap base = random_dense(tiny_arch(), 9);
    MoeRecipe r = recipe_of(Gating::Trained, 2, 2, Granularity::Fgmlp);
    r.noise_sigma = 0.7;
    const TensorMap moe = compose_of(base, r, {testing::with_new_ffn(base, 1), testing::with_new_ffn(base, 2)});
    const auto model = Model<double>::from_checkpoint(moe);
    const auto& layer = model.layers[0];
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto x = normals(8, 200 + s);
        const auto [y, ds] = fgmlp_forward(layer, std::span<const double>(x), model.gate_config());
        const auto ref = oracle::fgmlp({expert_of(layer.experts[0]), expert_of(layer.experts[1])},
                                       oracle::rows_of(layer.ffn_routers[0]), oracle::rows_of(layer.ffn_routers[1]),
                                       oracle::rows_of(layer.ffn_routers[2]), x, 2, std::nullopt);
        for (int i = 0; i < 8; ++i) EXPECT_NEAR(y[i], ref[i], 1e-10);
    }
}

TEST(Fgmlp, MissingRouterIsAnError) {
    const TensorMap base = random_dense(tiny_arch(), 9);
    const TensorMap moe = compose_of(base, recipe_of(Gating::Noisy, 2, 2, Granularity::Fgmlp), {base, base});
    auto model = Model<double>::from_checkpoint(moe);
    model.layers[0].ffn_routers.pop_back();
    const auto x = normals(8, 1);
    EXPECT_THROW(fgmlp_forward(model.layers[0], std::span<const double>(x), model.gate_config()), Error);
}

// ---------------------------------------------------------------- lora_expert_forward

TEST(Lora, ZeroBEqualsBase) {
    const TensorMap base = random_dense(tiny_arch(), 10);
    const auto model = Model<double>::from_checkpoint(base);
    const auto& ffn = model.layers[0].experts[0];
    LoraAdapter<double> adapter;
    for (int p = 0; p < 3; ++p) {
        const int out = ffn.proj(p).out_dim(), in = ffn.proj(p).in_dim();
        adapter.factors[p] = LoraFactor<double>{mat(2, in, normals(2 * in, p + 1)), Matrix<double>(out, 2), 1.5};
    }
    const auto x = normals(8, 11);
    EXPECT_EQ(lora_expert_forward(ffn, adapter, std::span<const double>(x)), ffn_forward(ffn, std::span<const double>(x)));
}

TEST(Lora, HandComputedGateDelta) {
    const FfnWeights<double> base = scalar_ffn(1, 2, 1);
    LoraAdapter<double> adapter;
    adapter.factors[0] = LoraFactor<double>{mat(1, 1, {1}), mat(1, 1, {1}), 1.0};
    const std::vector<double> x{1.0};
    const auto y = lora_expert_forward(base, adapter, std::span<const double>(x));
    EXPECT_NEAR(y[0], 3.5231884, 1e-7);
    EXPECT_NEAR(y[0], 2.0 * 2.0 / (1.0 + std::exp(-2.0)), 1e-15);
}

TEST(Lora, RankShapeMismatch) {
    const FfnWeights<double> base = scalar_ffn(1, 2, 1);
    LoraAdapter<double> adapter;
    adapter.factors[1] = LoraFactor<double>{mat(2, 1, {1, 1}), mat(1, 1, {1}), 1.0};
    const std::vector<double> x{1.0};
    EXPECT_THROW(lora_expert_forward(base, adapter, std::span<const double>(x)), Error);
}

TEST(Lora, SvdFactorizationMatchesFullExpert) {
    const TensorMap f = load_checkpoint(std::string(MOEFORGE_FIXTURE_DIR) + "/lora_svd.safetensors");
    const double alpha = std::stod(f.metadata().at("lora.alpha"));
    const int rank = std::stoi(f.metadata().at("lora.rank"));
    auto m = [&](const std::string& n) { return Matrix<double>::from_tensor(f.at(n)); };
    const FfnWeights<double> base{proj(m("base.gate.weight")), proj(m("base.up.weight")), proj(m("base.down.weight"))};
    const FfnWeights<double> full{proj(m("full.gate.weight")), proj(m("full.up.weight")), proj(m("full.down.weight"))};
    LoraAdapter<double> adapter;
    const char* ps[] = {"gate", "up", "down"};
    for (int p = 0; p < 3; ++p)
        adapter.factors[p] = LoraFactor<double>{m(std::string("lora.") + ps[p] + ".A"),
                                                m(std::string("lora.") + ps[p] + ".B"), alpha / rank};
    const auto x = f.at("x").values<double>();
    const auto expected = f.at("expected").values<double>();
    const auto y = lora_expert_forward(base, adapter, std::span<const double>(x));
    const auto yf = ffn_forward(full, std::span<const double>(x));
    for (std::size_t i = 0; i < y.size(); ++i) {
        EXPECT_NEAR(y[i], yf[i], 1e-8);
        EXPECT_NEAR(y[i], expected[i], 1e-8);
    }
}

// ---------------------------------------------------------------- model_forward

TEST(ModelForward, GatelessCopiesMatchDense) {
    const TensorMap base = random_dense(tiny_arch(), 12);
    const TensorMap moe = compose_of(base, recipe_of(Gating::Gateless, 2), {base, base});
    const auto tokens = random_tokens(12, 32, 3);
    const auto d64 = model_forward(Model<double>::from_checkpoint(base), tokens);
    const auto m64 = model_forward(Model<double>::from_checkpoint(moe), tokens);
    for (std::size_t i = 0; i < d64.logits.data.size(); ++i) EXPECT_NEAR(d64.logits.data[i], m64.logits.data[i], 1e-10);
    const auto d32 = model_forward(Model<float>::from_checkpoint(base), tokens);
    const auto m32 = model_forward(Model<float>::from_checkpoint(moe), tokens);
    for (std::size_t i = 0; i < d32.logits.data.size(); ++i) EXPECT_NEAR(d32.logits.data[i], m32.logits.data[i], 1e-5);
}

TEST(ModelForward, SingleTokenTraceHasOneDecisionPerLayer) {
    const TensorMap base = random_dense(tiny_arch(), 13);
    const TensorMap moe = compose_of(base, recipe_of(Gating::Noisy, 3), {base, base, base});
    const std::vector<int> tokens{5};
    const auto res = model_forward(Model<double>::from_checkpoint(moe), tokens);
    ASSERT_EQ(res.trace.records.size(), 2u);
    EXPECT_EQ(res.trace.records[0].layer, 0);
    EXPECT_EQ(res.trace.records[1].layer, 1);
    EXPECT_EQ(res.logits.rows, 1);
    EXPECT_EQ(res.logits.cols, 32);
}

TEST(ModelForward, TraceCountsForFgmlpAndMixedAttention) {
    const TensorMap base = random_dense(tiny_arch(), 14);
    const TensorMap moe = compose_of(base, recipe_of(Gating::Noisy, 2, 1, Granularity::Fgmlp, true), {base, base});
    const auto tokens = random_tokens(5, 32, 4);
    const auto res = model_forward(Model<double>::from_checkpoint(moe), tokens);
    EXPECT_EQ(res.trace.records.size(), 2u * 4u * 5u);
    for (const auto& r : res.trace.records) {
        double sum = 0.0;
        for (double w : r.decision.weights) sum += w;
        EXPECT_NEAR(sum, 1.0, 1e-6);
        EXPECT_EQ(r.top_expert, r.decision.top_expert());
    }
}

TEST(ModelForward, TokenOutOfRange) {
    const auto model = Model<double>::from_checkpoint(random_dense(tiny_arch(), 15));
    const std::vector<int> bad{1, 32};
    EXPECT_THROW(model_forward(model, bad), Error);
    const std::vector<int> negative{-1};
    EXPECT_THROW(model_forward(model, negative), Error);
}

TEST(ModelForward, DeterministicBytes) {
    const TensorMap base = random_dense(tiny_arch(), 16);
    MoeRecipe r = recipe_of(Gating::Noisy, 3, 2, Granularity::Ffn, true);
    r.noise_sigma = 0.3;
    const TensorMap moe = compose_of(base, r, {testing::with_new_ffn(base, 1), base, testing::with_new_ffn(base, 2)});
    const auto model = Model<double>::from_checkpoint(moe);
    const auto tokens = random_tokens(16, 32, 5);
    EXPECT_EQ(model_forward(model, tokens).logits.data, model_forward(model, tokens).logits.data);
}

TEST(ModelForward, CausalPrefixInvariance) {
    const auto model = Model<double>::from_checkpoint(random_dense(tiny_arch(), 17));
    const auto tokens = random_tokens(10, 32, 6);
    const auto full = model_forward(model, tokens);
    const auto prefix = model_forward(model, std::span<const int>(tokens).first(4));
    for (int t = 0; t < 4; ++t)
        for (int v = 0; v < 32; ++v) EXPECT_NEAR(full.logits.at(t, v), prefix.logits.at(t, v), 1e-12);
}

// ---------------------------------------------------------------- collect_prompt_hiddens

TEST(PromptHiddens, SingleTokenPromptIsItsHiddenState) {
    const auto model = Model<double>::from_checkpoint(random_dense(tiny_arch(), 18));
    const std::vector<int> prompt{7};
    ForwardTape<double> tape;
    model_forward(model, prompt, nullptr, &tape);
    const auto stats = collect_prompt_hiddens(model, {prompt}, {{3}});
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < 8; ++i) EXPECT_EQ(stats.ffn_positive[l][i], tape.layers[l].h_mid[i]);
}

TEST(PromptHiddens, DuplicationInvariance) {
    const auto model = Model<double>::from_checkpoint(random_dense(tiny_arch(), 19));
    const std::vector<std::vector<int>> pos{{1, 2, 3}, {4, 5}}, neg{{6}};
    auto doubled = pos;
    doubled.insert(doubled.end(), pos.begin(), pos.end());
    const auto a = collect_prompt_hiddens(model, pos, neg);
    const auto b = collect_prompt_hiddens(model, doubled, neg);
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < 8; ++i) EXPECT_NEAR(a.ffn_positive[l][i], b.ffn_positive[l][i], 1e-14);
}

TEST(PromptHiddens, TokenWeightedMean) {
    const auto model = Model<double>::from_checkpoint(random_dense(tiny_arch(), 20));
    const std::vector<int> p1{1, 2, 3}, p2{9};
    const auto stats = collect_prompt_hiddens(model, {p1, p2}, {{0}});
    ForwardTape<double> t1, t2;
    model_forward(model, p1, nullptr, &t1);
    model_forward(model, p2, nullptr, &t2);
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < 8; ++i) {
            double acc = 0.0;
            for (int t = 0; t < 3; ++t) acc += t1.layers[l].h_mid[t * 8 + i];
            acc += t2.layers[l].h_mid[i];
            EXPECT_NEAR(stats.ffn_positive[l][i], acc / 4.0, 1e-14);
        }
}

TEST(PromptHiddens, EmptySetIsAnError) {
    const auto model = Model<double>::from_checkpoint(random_dense(tiny_arch(), 21));
    EXPECT_THROW(collect_prompt_hiddens(model, {}, {{1}}), Error);
    EXPECT_THROW(collect_prompt_hiddens(model, {{1}}, {}), Error);
}

TEST(ByteTokenizer, RoundTrip) {
    const auto ids = ByteTokenizer::encode("hi!", true);
    EXPECT_EQ(ids, (std::vector<int>{ByteTokenizer::kBos, 'h', 'i', '!'}));
    EXPECT_EQ(ByteTokenizer::decode(ids), "hi!");
    EXPECT_EQ(ByteTokenizer::encode("a", false), (std::vector<int>{'a'}));
}

}  // namespace
}  // namespace moeforge
