// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Router training at desk scale. Gradients are computed by a hand-written
// reverse pass over the F64 forward tape; experts, attention and norms are
// frozen. Top-K selection is treated as piecewise constant: gradients reach
// the router only through the softmax weights of the selected experts.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "moeforge/runtime.hpp"
#include "moeforge/tensorstore.hpp"

namespace moeforge {

enum class Trainable : std::uint8_t { Router, RouterPlusEmbed };
enum class Regime : std::uint8_t { Instruct, Pretrain };
enum class Schedule : std::uint8_t { Constant };
enum class Optimizer : std::uint8_t { Sgd, Adam };

std::string_view to_string(Trainable t);
std::string_view to_string(Regime r);
std::string_view to_string(Optimizer o);
Trainable parse_trainable(std::string_view s);
Regime parse_regime(std::string_view s);
Optimizer parse_optimizer(std::string_view s);

struct TrainConfig {
    Trainable trainable = Trainable::Router;
    Regime regime = Regime::Instruct;
    int epochs = 1;
    int batch_size = 1;
    int grad_accum_steps = 16;
    double learning_rate = 1e-4;
    Schedule schedule = Schedule::Constant;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::Sgd;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

/// One sequence: position t predicts targets[t] from inputs[0..t].
struct Example {
    std::vector<int> inputs;
    std::vector<int> targets;
    std::vector<std::uint8_t> mask;

    /// Shifts `tokens` by one. Instruct masks the targets that fall inside the
    /// first `prompt_len` tokens; pretrain keeps every target.
    static Example from_sequence(const std::vector<int>& tokens, std::size_t prompt_len, Regime regime);
    std::size_t active() const;
};

struct Batch {
    std::vector<Example> examples;

    std::size_t active() const;
};

/// Mean negative log-likelihood over active positions.
template <typename T>
double lm_loss(const Matrix<T>& logits, const std::vector<int>& targets, const std::vector<std::uint8_t>& mask);

using GradMap = std::map<std::string, Matrix<double>, std::less<>>;

/// Tensor names that training may update, in name order.
std::vector<std::string> trainable_names(const Model<double>& model, Trainable trainable);
/// Mutable access to a trainable matrix by tensor name.
Matrix<double>& parameter(Model<double>& model, std::string_view name);
const Matrix<double>& parameter(const Model<double>& model, std::string_view name);

struct LossGrad {
    double loss_sum = 0.0;       // summed over active positions
    std::size_t tokens = 0;      // active positions
    GradMap grad_sum;            // gradient of loss_sum
};

/// Summed loss and gradient over the examples, reduced in example order.
LossGrad loss_and_grad(const Model<double>& model, const std::vector<Example>& examples, Trainable trainable);

/// Mean loss over the active positions of a batch.
double batch_loss(const Model<double>& model, const Batch& batch);

/// Gradient of batch_loss restricted to the trainable set. Error for gate-less
/// models.
GradMap grad(const Model<double>& model, const Batch& batch, Trainable trainable);

struct FiniteDiffConfig {
    Trainable trainable = Trainable::Router;
    int subset = 64;
    double eps = 1e-4;
    double abs_floor = 1e-6;
    std::uint64_t seed = 0;
    /// Applied to the analytic gradient before comparison (harness self-test).
    std::function<void(GradMap&)> corrupt;
};

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    int checked = 0;
    int skipped = 0;  // entries whose top-K selection changes within +-eps
    std::string worst_entry;
};

/// Central differences on a sampled subset of trainable entries. An entry
/// counts when both gradients are within the floor of zero as error 0.
FiniteDiffReport finite_diff_check(const Model<double>& model, const Batch& batch, const FiniteDiffConfig& cfg);

struct LossRecord {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::uint64_t tokens_seen = 0;
};

struct TrainResult {
    TensorMap checkpoint;
    std::vector<LossRecord> curve;
};

/// Shuffles the corpus each epoch (seeded), groups it into micro-batches of
/// batch_size and takes one optimizer step per grad_accum_steps micro-batches
/// (a trailing partial window also steps). The accumulated gradient is the
/// token-weighted mean over the window. Only trainable tensors are rewritten,
/// in their stored dtype.
TrainResult train_routers(const TensorMap& ckpt, const std::vector<Example>& corpus, const TrainConfig& cfg);

/// "step,loss,lr,tokens_seen" rows.
void write_loss_csv(const std::vector<LossRecord>& curve, std::ostream& out);

/// Writes the trainable matrices of `model` back into `ckpt` in stored dtypes.
void store_parameters(const Model<double>& model, const std::vector<std::string>& names, TensorMap& ckpt);

}  // namespace moeforge
