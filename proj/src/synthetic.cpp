// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/synthetic.hpp"

#include "moeforge/compose.hpp"
#include "moeforge/error.hpp"
#include "moeforge/naming.hpp"
#include "moeforge/rng.hpp"

namespace moeforge {

int TwoPopulationTask::successor(int token) const {
    const int p = options.population_size;
    const int pop = population_of(token);
    return pop * p + (token - pop * p + 1) % p;
}

std::vector<int> TwoPopulationTask::walk(int start, int length) const {
    std::vector<int> seq{start};
    while (static_cast<int>(seq.size()) < length) seq.push_back(successor(seq.back()));
    return seq;
}

namespace {

Tensor dense(std::vector<std::int64_t> shape, const std::vector<double>& v) {
    return Tensor::from_values(DType::F64, std::move(shape), std::span<const double>(v));
}

}  // namespace

TwoPopulationTask make_two_population_task(const TwoPopulationOptions& o) {
    if (o.population_size < 2) throw Error("population_size must be >= 2");
    if (o.sequence_length < 2 || o.prompt_length >= o.sequence_length) throw Error("bad synthetic sequence shape");
    TwoPopulationTask task;
    task.options = o;
    const int v = 2 * o.population_size;
    const int pop0 = v, pred0 = v + 2;
    const int h = (2 * v + 2 + 3) / 4 * 4;
    const int inter = v;

    ArchDescriptor arch;
    arch.num_layers = o.num_layers;
    arch.hidden_size = h;
    arch.ffn_intermediate_size = inter;
    arch.num_heads = 2;
    arch.num_kv_heads = 1;
    arch.vocab_size = v;

    std::vector<double> embed(static_cast<std::size_t>(v) * h, 0.0), head(static_cast<std::size_t>(v) * h, 0.0);
    for (int t = 0; t < v; ++t) {
        embed[t * h + t] = o.embed_gain;
        embed[t * h + pop0 + task.population_of(t)] = o.embed_gain;
        head[t * h + pred0 + t] = o.head_gain;
    }
    std::vector<double> ones(h, 1.0), ffn_norm(h, 1.0);
    for (int i = 0; i < v + 2; ++i) ffn_norm[i] = o.norm_gain;
    const std::vector<double> attn_sq(static_cast<std::size_t>(h) * h, 0.0), attn_kv(static_cast<std::size_t>(arch.kv_dim()) * h, 0.0);

    std::vector<double> units(static_cast<std::size_t>(inter) * h, 0.0);
    for (int j = 0; j < inter; ++j) units[j * h + j] = o.unit_gain;

    auto base_layer = [&](TensorMap& m) {
        m.insert(std::string(names::kEmbed), dense({v, h}, embed));
        m.insert(std::string(names::kLmHead), dense({v, h}, head));
        m.insert(std::string(names::kFinalNorm), dense({h}, ones));
        for (int l = 0; l < o.num_layers; ++l) {
            m.insert(names::attn_norm(l), dense({h}, ones));
            m.insert(names::ffn_norm(l), dense({h}, ffn_norm));
            m.insert(names::attn(l, AttnProj::Q), dense({h, h}, attn_sq));
            m.insert(names::attn(l, AttnProj::K), dense({arch.kv_dim(), h}, attn_kv));
            m.insert(names::attn(l, AttnProj::V), dense({arch.kv_dim(), h}, attn_kv));
            m.insert(names::attn(l, AttnProj::O), dense({h, h}, attn_sq));
        }
        write_arch_metadata(arch, m.metadata());
    };

    auto with_ffn = [&](int expert) {
        TensorMap m;
        base_layer(m);
        std::vector<double> down(static_cast<std::size_t>(h) * inter, 0.0);
        for (int j = 0; j < inter; ++j) {
            const int target = expert >= 0 && task.population_of(j) == expert ? task.successor(j) : j;
            down[(pred0 + target) * inter + j] = o.down_gain;
        }
        for (int l = 0; l < o.num_layers; ++l) {
            m.insert(names::ffn(l, FfnProj::Gate), dense({inter, h}, units));
            m.insert(names::ffn(l, FfnProj::Up), dense({inter, h}, units));
            m.insert(names::ffn(l, FfnProj::Down), dense({h, inter}, down));
        }
        return m;
    };

    task.base = with_ffn(-1);
    task.experts = {with_ffn(0), with_ffn(1)};
    task.recipe.gating = Gating::Trained;
    task.recipe.top_k = 2;
    task.recipe.noise_sigma = o.noise_sigma;
    task.recipe.seed = o.seed;
    task.recipe.experts = {{ExpertKind::Full, "population0", {}, {}, {}}, {ExpertKind::Full, "population1", {}, {}, {}}};
    task.moe = compose_moe(task.base, task.recipe, task.experts);

    SplitMix64 rng(o.seed ^ 0x5eedull);
    for (int i = 0; i < o.corpus_size; ++i) {
        const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(v)));
        task.corpus.push_back(Example::from_sequence(task.walk(start, o.sequence_length),
                                                     static_cast<std::size_t>(o.prompt_length), o.regime));
    }
    return task;
}

RoutingAccuracy routing_accuracy(const TensorMap& moe, const TwoPopulationTask& task) {
    const Model<double> model = Model<double>::from_checkpoint(moe);
    RoutingAccuracy acc;
    RoutingTrace traces[2];
    std::uint64_t hits[2] = {0, 0}, total[2] = {0, 0};
    for (int start = 0; start < task.vocab_size(); ++start) {
        const auto seq = task.walk(start, task.options.sequence_length);
        const int pop = task.population_of(start);
        const auto res = model_forward(model, seq);
        for (const auto& r : res.trace.records) {
            ++total[pop];
            if (r.top_expert == pop) ++hits[pop];
        }
        traces[pop].append(res.trace);
    }
    for (int p = 0; p < 2; ++p) {
        acc.population[p] = static_cast<double>(hits[p]) / static_cast<double>(total[p]);
        acc.heatmap[p] = routing_heatmap(traces[p], 2);
    }
    acc.overall = static_cast<double>(hits[0] + hits[1]) / static_cast<double>(total[0] + total[1]);
    return acc;
}

}  // namespace moeforge
