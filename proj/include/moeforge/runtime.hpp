// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference forward pass for dense and composed MOE decoders.
//
// Decoder layer: RMSNorm -> causal attention with rotary embedding ->
// residual -> RMSNorm -> routed SwiGLU FFN -> residual. The FFN position
// holds N experts and a gate; attention may be mixed the same way.
// Everything is computed in T (float or double); F64 is the oracle and
// gradient precision.

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moeforge/arch.hpp"
#include "moeforge/recipe.hpp"
#include "moeforge/tensorstore.hpp"

namespace moeforge {

template <typename T>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, T(0)) {}

    static Matrix from_tensor(const Tensor& t);

    std::span<T> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const T> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }
    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    T at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::span<const T> span() const { return data; }
};

/// Low-rank update scale * B A, B: out x r, A: r x in.
template <typename T>
struct LoraFactor {
    Matrix<T> a;
    Matrix<T> b;
    T scale = T(1);
};

/// A frozen linear map W (optionally shared between experts) plus an
/// optional LoRA delta, applied lazily: y = W x + scale * B (A x).
template <typename T>
struct Projection {
    std::shared_ptr<const Matrix<T>> weight;
    std::optional<LoraFactor<T>> lora;

    int out_dim() const { return weight->rows; }
    int in_dim() const { return weight->cols; }
    void apply(std::span<const T> x, std::span<T> y) const;
    /// dx += (W + scale B A)^T dy
    void apply_transpose_acc(std::span<const T> dy, std::span<T> dx) const;
};

template <typename T>
struct FfnWeights {
    Projection<T> gate;
    Projection<T> up;
    Projection<T> down;

    const Projection<T>& proj(int p) const { return p == 0 ? gate : (p == 1 ? up : down); }
};

/// Per-projection LoRA factors of one adapter expert (entries may be absent).
template <typename T>
struct LoraAdapter {
    std::array<std::optional<LoraFactor<T>>, 3> factors;  // gate, up, down
};

template <typename T>
struct AttentionWeights {
    Matrix<T> q, k, v, o;
};

/// A place where a gate makes a decision.
enum class Site : std::uint8_t { Attn, Ffn, FfnGate, FfnUp, FfnDown };
std::string_view to_string(Site s);
Site parse_site(std::string_view s);

template <typename T>
struct Layer {
    std::vector<T> attn_norm;
    std::vector<T> ffn_norm;
    std::vector<AttentionWeights<T>> attention;  // one block unless attention is mixed
    std::optional<Matrix<T>> attn_router;
    std::vector<FfnWeights<T>> experts;
    std::vector<Matrix<T>> ffn_routers;  // empty (gate-less), 1 (FFN) or 3 (FGMLP gate/up/down)
};

struct GateConfig {
    bool gateless = true;
    int top_k = 1;
    std::optional<int> always_on;
};

struct GateDecision {
    std::vector<int> indices;     // always_on first, then by descending logit
    std::vector<double> weights;  // parallel to indices

    /// Highest weight; ties go to the lower expert index.
    int top_expert() const;
};

struct RouteRecord {
    int layer = 0;
    Site site = Site::Ffn;
    int token = 0;
    int top_expert = 0;
    GateDecision decision;
};

/// Ordered by (layer, site, token).
struct RoutingTrace {
    std::vector<RouteRecord> records;

    void append(const RoutingTrace& other);
};

/// Counts expert evaluations so tests can observe the sparsity contract.
struct EvalCounter {
    std::atomic<std::uint64_t> expert_ffn{0};   // whole-FFN expert evaluations (FFN granularity)
    std::atomic<std::uint64_t> projections{0};  // single expert projection evaluations
};

template <typename T>
struct Model {
    ArchDescriptor arch;
    MoeRecipe recipe;  // gate-less with one expert for dense checkpoints
    bool is_moe = false;
    Matrix<T> embed;
    Matrix<T> lm_head;
    std::vector<T> final_norm;
    std::vector<Layer<T>> layers;

    int num_experts() const { return recipe.num_experts(); }
    GateConfig gate_config() const;

    /// Resolves every weight of a dense or composed checkpoint.
    static Model from_checkpoint(const TensorMap& ckpt);
};

// ---------------------------------------------------------------------------
// Single-vector building blocks

/// down * (silu(gate * x) .* (up * x))
template <typename T>
std::vector<T> ffn_forward(const Matrix<T>& gate_w, const Matrix<T>& up_w, const Matrix<T>& down_w,
                           std::span<const T> x);
template <typename T>
std::vector<T> ffn_forward(const FfnWeights<T>& ffn, std::span<const T> x);

/// Gate-less (router == nullptr): every expert with weight 1/N. Otherwise
/// logits = R x; selection = always_on plus the best remaining experts up to
/// K (ties to the lower index); weights = softmax over selected logits.
template <typename T>
GateDecision gate(const Matrix<T>* router, int num_experts, std::span<const T> x, const GateConfig& cfg);

template <typename T>
std::pair<std::vector<T>, GateDecision> moe_ffn_forward(const Layer<T>& layer, std::span<const T> x,
                                                        const GateConfig& cfg, EvalCounter* counter = nullptr);

/// Fine-grained variant: gate, up and down projections each mixed under
/// their own router.
template <typename T>
std::pair<std::vector<T>, std::array<GateDecision, 3>> fgmlp_forward(const Layer<T>& layer, std::span<const T> x,
                                                                     const GateConfig& cfg,
                                                                     EvalCounter* counter = nullptr);

/// SwiGLU over projections p(x) + scale_p * B_p (A_p x).
template <typename T>
std::vector<T> lora_expert_forward(const FfnWeights<T>& base, const LoraAdapter<T>& adapter, std::span<const T> x);

// ---------------------------------------------------------------------------
// Whole-model forward

/// Activations kept for the backward pass.
template <typename T>
struct AttentionBlockTape {
    bool used = false;
    std::vector<T> q, k, v;  // after rotary embedding for q and k
    std::vector<T> probs;    // [heads x tokens x tokens]
    std::vector<T> ctx;      // [tokens x hidden], pre output projection
    std::vector<T> out;      // [tokens x hidden], after output projection
};

template <typename T>
struct FfnTokenTape {
    std::vector<GateDecision> decisions;  // 1 (FFN) or 3 (FGMLP)
    // FFN granularity, parallel to decisions[0].indices
    std::vector<std::vector<T>> gate_pre, up_out, expert_out;
    // FGMLP: per-expert projection outputs parallel to each decision, then the mixes
    std::vector<std::vector<T>> fg_gate, fg_up, fg_down;
    std::vector<T> mixed_gate, mixed_up, act;
};

template <typename T>
struct LayerTape {
    std::vector<T> x_in;  // residual entering the layer
    std::vector<T> xa;    // attention-normed input
    std::vector<GateDecision> attn_decisions;  // per token, when attention is mixed
    std::vector<AttentionBlockTape<T>> blocks;
    std::vector<T> h_mid;  // residual after attention (enters the FFN norm)
    std::vector<T> xf;     // FFN-normed input
    std::vector<FfnTokenTape<T>> ffn;
};

template <typename T>
struct ForwardTape {
    std::vector<int> tokens;
    std::vector<LayerTape<T>> layers;
    std::vector<T> x_final;  // residual entering the final norm
    std::vector<T> xn;       // final-normed
};

template <typename T>
struct ForwardResult {
    Matrix<T> logits;  // tokens x vocab
    RoutingTrace trace;
};

/// Throws Error("token id out of range") for ids >= vocab.
template <typename T>
ForwardResult<T> model_forward(const Model<T>& model, std::span<const int> tokens,
                               EvalCounter* counter = nullptr, ForwardTape<T>* tape = nullptr);

/// Mean hidden states per layer over all tokens of a prompt set.
struct PromptHiddenStats {
    std::vector<std::vector<double>> ffn_positive;   // residual entering the FFN norm
    std::vector<std::vector<double>> ffn_negative;
    std::vector<std::vector<double>> attn_positive;  // residual entering the layer
    std::vector<std::vector<double>> attn_negative;
};

template <typename T>
PromptHiddenStats collect_prompt_hiddens(const Model<T>& model, const std::vector<std::vector<int>>& positive,
                                         const std::vector<std::vector<int>>& negative);

// ---------------------------------------------------------------------------

/// Byte-level fallback tokenizer: ids 0..255 are bytes, 256 = BOS, 257 = EOS.
struct ByteTokenizer {
    static constexpr int kBos = 256;
    static constexpr int kEos = 257;
    static constexpr int kVocab = 258;

    static std::vector<int> encode(std::string_view text, bool add_bos = true);
    static std::string decode(std::span<const int> ids);
};

}  // namespace moeforge
