// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "moeforge/arch.hpp"
#include "moeforge/error.hpp"
#include "moeforge/naming.hpp"
#include "tiny.hpp"

namespace moeforge {
namespace {

using testing::random_dense;
using testing::tiny_arch;

TEST(Arch, InfersTinyFixture) {
    const ArchDescriptor a = infer_arch(random_dense(tiny_arch(), 1));
    EXPECT_EQ(a.num_layers, 2);
    EXPECT_EQ(a.hidden_size, 8);
    EXPECT_EQ(a.ffn_intermediate_size, 16);
    EXPECT_EQ(a.num_heads, 2);
    EXPECT_EQ(a.num_kv_heads, 1);
    EXPECT_EQ(a.vocab_size, 32);
    EXPECT_DOUBLE_EQ(a.norm_eps, 1e-5);
    EXPECT_EQ(a, tiny_arch());
}

TEST(Arch, InconsistentIntermediateSize) {
    TensorMap m = random_dense(tiny_arch(), 1);
    const std::vector<double> v(32 * 8, 0.1);
    m.set(names::ffn(1, FfnProj::Gate), Tensor::from_values(DType::F64, {32, 8}, std::span<const double>(v)));
    try {
        infer_arch(m);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("inconsistent ffn_intermediate_size"), std::string::npos) << e.what();
    }
}

TEST(Arch, MissingTensor) {
    TensorMap m = random_dense(tiny_arch(), 1);
    m.erase(names::kLmHead);
    EXPECT_THROW(infer_arch(m), Error);
}

TEST(Arch, NormEpsFromMetadataOrDefault) {
    TensorMap m = random_dense(tiny_arch(), 1);
    m.metadata()["arch.norm_eps"] = "1e-06";
    EXPECT_DOUBLE_EQ(infer_arch(m).norm_eps, 1e-6);
    m.metadata().erase("arch.norm_eps");
    EXPECT_DOUBLE_EQ(infer_arch(m).norm_eps, 1e-5);
}

TEST(Arch, InvariantToListingOrder) {
    const TensorMap m = random_dense(tiny_arch(), 2);
    TensorMap reversed;
    std::vector<std::pair<std::string, Tensor>> items(m.tensors().begin(), m.tensors().end());
    for (auto it = items.rbegin(); it != items.rend(); ++it) reversed.insert(it->first, it->second);
    reversed.metadata() = m.metadata();
    EXPECT_EQ(infer_arch(reversed), infer_arch(m));
}

TEST(Arch, MistralDimsAccepted) {
    const ArchDescriptor a = mistral7b_arch();
    EXPECT_NO_THROW(a.validate());
    EXPECT_EQ(a.num_layers, 32);
    EXPECT_EQ(a.hidden_size, 4096);
    EXPECT_EQ(a.ffn_intermediate_size, 14336);
}

TEST(Arch, ValidateRejectsBadDivisibility) {
    ArchDescriptor a = tiny_arch();
    a.num_heads = 3;
    EXPECT_THROW(a.validate(), Error);
    a = tiny_arch();
    a.num_kv_heads = 3;
    EXPECT_THROW(a.validate(), Error);
    a = tiny_arch();
    a.hidden_size = 0;
    EXPECT_THROW(a.validate(), Error);
}

TEST(Compat, IdenticalExpertsCompatible) {
    const ArchDescriptor a = tiny_arch();
    const CompatReport r = check_compatibility(a, {a, a, a});
    EXPECT_TRUE(r.compatible);
    EXPECT_TRUE(r.mismatches.empty());
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Compat, HiddenSizeMismatchReported) {
    const ArchDescriptor a = tiny_arch();
    ArchDescriptor b = a;
    b.hidden_size = 16;
    const CompatReport r = check_compatibility(a, {a, b});
    EXPECT_FALSE(r.compatible);
    ASSERT_EQ(r.mismatches.size(), 1u);
    EXPECT_EQ(r.mismatches[0], (ArchMismatch{"hidden_size", 8, 1, 16}));
}

TEST(Compat, VocabMismatchIsWarningUnlessEmbeddingsTrained) {
    const ArchDescriptor a = tiny_arch();
    ArchDescriptor b = a;
    b.vocab_size = 40;
    const CompatReport warn = check_compatibility(a, {a, b, a});
    EXPECT_TRUE(warn.compatible);
    EXPECT_TRUE(warn.mismatches.empty());
    ASSERT_EQ(warn.warnings.size(), 1u);
    EXPECT_EQ(warn.warnings[0], (ArchMismatch{"vocab_size", 32, 1, 40}));

    const CompatReport hard = check_compatibility(a, {a, b, a}, true);
    EXPECT_FALSE(hard.compatible);
    ASSERT_EQ(hard.mismatches.size(), 1u);
    EXPECT_EQ(hard.mismatches[0].field, "vocab_size");
}

TEST(Compat, CompatibleIffNoMismatches) {
    const ArchDescriptor a = tiny_arch();
    for (int field = 0; field < 6; ++field) {
        ArchDescriptor b = a;
        switch (field) {
            case 0: b.num_layers = 3; break;
            case 1: b.hidden_size = 12; break;
            case 2: b.ffn_intermediate_size = 24; break;
            case 3: b.num_heads = 4; break;
            case 4: b.num_kv_heads = 2; break;
            default: b.norm_eps = 1e-6; break;
        }
        const CompatReport r = check_compatibility(a, {b});
        EXPECT_EQ(r.compatible, r.mismatches.empty());
        EXPECT_FALSE(r.compatible) << field;
    }
}

TEST(Naming, HubTranslationRoundTrips) {
    const TensorMap m = random_dense(tiny_arch(), 3);
    const TensorMap hub = to_hub_names(m);
    EXPECT_TRUE(uses_hub_names(hub));
    EXPECT_FALSE(uses_hub_names(m));
    EXPECT_TRUE(hub.contains("model.layers.0.mlp.gate_proj.weight"));
    EXPECT_TRUE(hub.contains("model.embed_tokens.weight"));
    EXPECT_EQ(canonicalize_names(hub), m);
}

TEST(Naming, LayerAndExpertOf) {
    EXPECT_EQ(names::layer_of("layers.3.ffn.experts.2.up.weight"), 3);
    EXPECT_EQ(names::expert_of("layers.3.ffn.experts.2.up.weight"), 2);
    EXPECT_EQ(names::layer_of("embed.weight"), std::nullopt);
    EXPECT_EQ(names::expert_of("layers.0.ffn.router.weight"), std::nullopt);
    EXPECT_EQ(names::ffn_router(4), "layers.4.ffn.router.weight");
    EXPECT_EQ(names::ffn_expert(1, 0, FfnProj::Down), "layers.1.ffn.experts.0.down.weight");
    EXPECT_EQ(names::attn_expert(0, 2, AttnProj::Q), "layers.0.attn.experts.2.q.weight");
}

}  // namespace
}  // namespace moeforge
