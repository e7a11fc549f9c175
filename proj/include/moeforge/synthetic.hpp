// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// A constructed task with a known optimal router. The vocabulary splits into
// two populations of P tokens; each sequence walks one population in cyclic
// successor order. Expert e predicts the successor for tokens of population e
// and the current token otherwise, so routing every token to the expert of its
// own population is optimal. Attention weights are zero; the hidden layout is
//
//   [0, V)          token identity
//   [V, V + 2)      population indicator
//   [V + 2, 2V + 2) prediction slots read by lm_head
//
// padded to a multiple of 4.

#pragma once

#include <cstdint>
#include <vector>

#include "moeforge/analysis.hpp"
#include "moeforge/recipe.hpp"
#include "moeforge/tensorstore.hpp"
#include "moeforge/training.hpp"

namespace moeforge {

struct TwoPopulationOptions {
    int population_size = 4;
    int num_layers = 2;
    int corpus_size = 2048;
    int sequence_length = 8;
    int prompt_length = 1;
    Regime regime = Regime::Instruct;
    std::uint64_t seed = 0;
    double noise_sigma = kDefaultNoiseSigma;

    double embed_gain = 1.0;
    double norm_gain = 1.0;  // FFN norm weight on identity and population dims
    double unit_gain = 0.25;  // gate/up weight of each token unit
    double down_gain = 1.0;
    double head_gain = 8.0;
};

struct TwoPopulationTask {
    TwoPopulationOptions options;
    TensorMap base;
    std::vector<TensorMap> experts;
    MoeRecipe recipe;
    TensorMap moe;
    std::vector<Example> corpus;

    int vocab_size() const { return 2 * options.population_size; }
    int population_of(int token) const { return token / options.population_size; }
    int successor(int token) const;
    std::vector<int> walk(int start, int length) const;
};

TwoPopulationTask make_two_population_task(const TwoPopulationOptions& options = {});

struct RoutingAccuracy {
    double population[2] = {0.0, 0.0};  // share of (layer, token) decisions routed to the matching expert
    double overall = 0.0;
    HeatmapTable heatmap[2];  // per-population heat maps
};

/// Evaluates one walk from every start token of the vocabulary.
RoutingAccuracy routing_accuracy(const TensorMap& moe, const TwoPopulationTask& task);

}  // namespace moeforge
