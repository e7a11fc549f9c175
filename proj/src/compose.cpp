// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/compose.hpp"

#include <cmath>
#include <exception>
#include <utility>

#include "moeforge/error.hpp"
#include "moeforge/naming.hpp"
#include "moeforge/rng.hpp"

namespace moeforge {

namespace {

std::vector<Site> ffn_sites(Granularity g) {
    if (g == Granularity::Ffn) return {Site::Ffn};
    return {Site::FfnGate, Site::FfnUp, Site::FfnDown};
}

void check_not_composed(const TensorMap& ckpt, const std::string& what) {
    if (has_recipe_metadata(ckpt.metadata())) throw Error(what + " is already a composed MOE checkpoint");
}

std::vector<double> normalized_difference(const std::vector<double>& pos, const std::vector<double>& neg, int layer,
                                          int expert) {
    std::vector<double> d(pos.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = pos[i] - neg[i];
        ss += d[i] * d[i];
    }
    const double norm = std::sqrt(ss);
    if (!(norm >= 1e-12))
        throw Error("zero-norm hidden-state difference at layer " + std::to_string(layer) + " for expert " +
                    std::to_string(expert));
    for (double& v : d) v /= norm;
    return d;
}

struct AdapterFactor {
    int layer;
    FfnProj proj;
    const Tensor* a;
    const Tensor* b;
};

std::vector<AdapterFactor> adapter_factors(const TensorMap& base, const TensorMap& adapter, int* rank_out) {
    std::vector<AdapterFactor> out;
    int rank = -1;
    for (const auto& [name, t] : adapter.tensors()) {
        const auto l = names::layer_of(name);
        bool matched = false;
        for (FfnProj p : kFfnProjs) {
            if (!l) break;
            const bool is_a = name == names::adapter_a(*l, p);
            const bool is_b = name == names::adapter_b(*l, p);
            if (!is_a && !is_b) continue;
            matched = true;
            const Tensor* w = base.find(names::ffn(*l, p));
            if (!w) throw Error("LoRA source adapts tensor absent from base: " + names::ffn(*l, p));
            const Tensor* a = adapter.find(names::adapter_a(*l, p));
            const Tensor* b = adapter.find(names::adapter_b(*l, p));
            if (!a || !b) throw Error("LoRA factor pair incomplete for " + names::ffn(*l, p));
            if (is_b) break;
            if (a->rank() != 2 || b->rank() != 2 || a->dim(0) < 1 || a->dim(1) != w->dim(1) ||
                b->dim(0) != w->dim(0) || b->dim(1) != a->dim(0))
                throw Error("LoRA rank/shape mismatch for " + names::ffn(*l, p));
            const int r = static_cast<int>(a->dim(0));
            if (rank >= 0 && r != rank) throw Error("LoRA adapter mixes ranks " + std::to_string(rank) + " and " +
                                                    std::to_string(r));
            rank = r;
            out.push_back({*l, p, a, b});
            break;
        }
        if (!matched) throw Error("unsupported LoRA adapter tensor: " + name);
    }
    if (out.empty()) throw Error("LoRA adapter holds no factors");
    if (rank_out) *rank_out = rank;
    return out;
}

// Names of layer `l` in a dense checkpoint, in lexicographic order.
template <typename F>
void for_layer(const TensorMap& ckpt, int l, F&& f) {
    const std::string prefix = names::layer_prefix(l);
    for (auto it = ckpt.tensors().lower_bound(prefix); it != ckpt.tensors().end(); ++it) {
        if (!it->first.starts_with(prefix)) break;
        f(it->first, it->second);
    }
}

bool is_base_ffn(const std::string& name, int l) {
    for (FfnProj p : kFfnProjs)
        if (name == names::ffn(l, p)) return true;
    return false;
}

bool is_base_attn(const std::string& name, int l) {
    for (AttnProj p : kAttnProjs)
        if (name == names::attn(l, p)) return true;
    return false;
}

void erase_recipe_keys(TensorMap::Metadata& meta) {
    for (auto it = meta.begin(); it != meta.end();) {
        if (it->first.starts_with("moe.") && !it->first.starts_with("moe.compat.")) {
            it = meta.erase(it);
        } else {
            ++it;
        }
    }
}

}  // namespace

std::string RouterSite::tensor_name() const {
    switch (site) {
        case Site::Attn: return names::attn_router(layer);
        case Site::Ffn: return names::ffn_router(layer);
        case Site::FfnGate: return names::ffn_router(layer, FfnProj::Gate);
        case Site::FfnUp: return names::ffn_router(layer, FfnProj::Up);
        case Site::FfnDown: return names::ffn_router(layer, FfnProj::Down);
    }
    return {};
}

std::uint64_t router_stream_key(int layer, Site site) {
    std::uint64_t code = 0;
    switch (site) {
        case Site::Ffn: code = 0; break;
        case Site::FfnGate: code = 1; break;
        case Site::FfnUp: code = 2; break;
        case Site::FfnDown: code = 3; break;
        case Site::Attn: code = 4; break;
    }
    return static_cast<std::uint64_t>(layer) * 8 + code;
}

RouterBank init_router(const RouterInitRequest& req, const ArchDescriptor& arch, int n) {
    RouterBank bank;
    if (req.mode == Gating::Gateless) return bank;
    if (n < 1) throw Error("router needs at least one expert");
    const int h = arch.hidden_size;
    if (req.mode == Gating::HiddenRepr) {
        if (!req.activations || static_cast<int>(req.activations->size()) != n)
            throw Error("hidden_repr router init needs activations for every expert");
        for (const auto& s : *req.activations)
            if (static_cast<int>(s.ffn_positive.size()) != arch.num_layers)
                throw Error("hidden_repr activations do not cover every layer");
    } else if (!(req.sigma > 0)) {
        throw Error("noise sigma must be > 0");
    }

    for (int l = 0; l < arch.num_layers; ++l) {
        std::vector<Site> sites = ffn_sites(req.granularity);
        if (req.mix_attention) sites.push_back(Site::Attn);
        for (Site site : sites) {
            RouterSite rs{l, site, n, h, {}};
            rs.values.reserve(static_cast<std::size_t>(n) * h);
            if (req.mode == Gating::HiddenRepr) {
                for (int i = 0; i < n; ++i) {
                    const auto& s = (*req.activations)[i];
                    const bool attn = site == Site::Attn;
                    const auto row = normalized_difference(attn ? s.attn_positive[l] : s.ffn_positive[l],
                                                           attn ? s.attn_negative[l] : s.ffn_negative[l], l, i);
                    rs.values.insert(rs.values.end(), row.begin(), row.end());
                }
            } else {
                SplitMix64 stream = keyed_stream(req.seed, router_stream_key(l, site));
                for (int j = 0; j < n * h; ++j) rs.values.push_back(req.sigma * stream.normal());
            }
            bank.sites.push_back(std::move(rs));
        }
    }
    return bank;
}

std::vector<int> default_prompt_encoder(const std::string& text, int vocab_size) {
    std::vector<int> ids = ByteTokenizer::encode(text, false);
    if (vocab_size < 256)
        for (int& id : ids) id %= vocab_size;
    return ids;
}

int validate_adapter(const TensorMap& base, const TensorMap& adapter) {
    int rank = 0;
    adapter_factors(base, adapter, &rank);
    return rank;
}

TensorMap merge_lora(const TensorMap& base, const TensorMap& adapter, double alpha) {
    int rank = 0;
    const auto factors = adapter_factors(base, adapter, &rank);
    const double scale = alpha / rank;
    TensorMap out = base;
    erase_recipe_keys(out.metadata());
    for (const auto& f : factors) {
        const std::string name = names::ffn(f.layer, f.proj);
        const Tensor& w = base.at(name);
        std::vector<double> merged = w.to_f64();
        const std::vector<double> a = f.a->to_f64();
        const std::vector<double> b = f.b->to_f64();
        const auto rows = w.dim(0), cols = w.dim(1);
        for (std::int64_t i = 0; i < rows; ++i)
            for (std::int64_t j = 0; j < cols; ++j) {
                double acc = 0.0;
                for (int k = 0; k < rank; ++k) acc += b[i * rank + k] * a[k * cols + j];
                merged[i * cols + j] += scale * acc;
            }
        out.set(name, Tensor::from_values(w.dtype(), w.shape(), std::span<const double>(merged)));
    }
    return out;
}

TensorMap compose_moe(const TensorMap& base, const MoeRecipe& recipe, std::span<const TensorMap> experts,
                      const ComposeOptions& options) {
    recipe.validate();
    check_not_composed(base, "base");
    const int n = recipe.num_experts();
    if (static_cast<int>(experts.size()) != n)
        throw Error("recipe lists " + std::to_string(n) + " experts but " + std::to_string(experts.size()) +
                    " expert checkpoints were given");
    const ArchDescriptor arch = infer_arch(base);
    arch.validate();

    std::vector<ArchDescriptor> full_arch;
    std::vector<int> full_index;
    bool any_lora = false;
    std::optional<int> lora_rank;
    for (int i = 0; i < n; ++i) {
        if (recipe.experts[i].kind == ExpertKind::Full) {
            check_not_composed(experts[i], "expert " + std::to_string(i));
            full_arch.push_back(infer_arch(experts[i]));
            full_index.push_back(i);
        } else {
            any_lora = true;
            const int r = validate_adapter(base, experts[i]);
            if (lora_rank && *lora_rank != r)
                throw Error("all LoRA experts must share one rank (" + std::to_string(*lora_rank) + " vs " +
                            std::to_string(r) + ")");
            lora_rank = r;
        }
    }
    CompatReport report = check_compatibility(arch, full_arch, options.embeddings_trained);
    for (auto& m : report.mismatches) m.expert_index = full_index[m.expert_index];
    for (auto& m : report.warnings) m.expert_index = full_index[m.expert_index];
    if (!report.compatible) throw Error("incompatible expert: " + report.describe());

    std::vector<PromptHiddenStats> stats;
    if (recipe.gating == Gating::HiddenRepr) {
        for (int i = 0; i < n; ++i) {
            const auto& spec = recipe.experts[i];
            const TensorMap dense = spec.kind == ExpertKind::Full
                                        ? experts[i]
                                        : merge_lora(base, experts[i], spec.lora_alpha.value());
            const Model<double> model = Model<double>::from_checkpoint(dense);
            auto encode_all = [&](const std::vector<std::string>& prompts) {
                std::vector<std::vector<int>> ids;
                for (const auto& p : prompts) ids.push_back(options.encode_prompt(p, model.arch.vocab_size));
                return ids;
            };
            stats.push_back(
                collect_prompt_hiddens(model, encode_all(spec.positive_prompts), encode_all(spec.negative_prompts)));
        }
    }
    RouterInitRequest req;
    req.mode = recipe.gating;
    req.granularity = recipe.granularity;
    req.mix_attention = recipe.mix_attention;
    req.sigma = recipe.noise_sigma;
    req.seed = recipe.seed;
    req.activations = &stats;
    const RouterBank bank = init_router(req, arch, n);

    TensorMap out;
    for (const auto& [name, t] : base.tensors())
        if (!names::layer_of(name)) out.insert(name, t);

    std::vector<std::vector<std::pair<std::string, Tensor>>> per_layer(arch.num_layers);
    std::vector<std::exception_ptr> failures(arch.num_layers);
#pragma omp parallel for schedule(static)
    for (int l = 0; l < arch.num_layers; ++l) {
        try {
            auto& v = per_layer[l];
            for_layer(base, l, [&](const std::string& name, const Tensor& t) {
                if (is_base_ffn(name, l) && !any_lora) return;
                if (is_base_attn(name, l) && recipe.mix_attention) return;
                v.emplace_back(name, t);
            });
            for (int i = 0; i < n; ++i) {
                const bool full = recipe.experts[i].kind == ExpertKind::Full;
                if (full) {
                    for (FfnProj p : kFfnProjs) v.emplace_back(names::ffn_expert(l, i, p), experts[i].at(names::ffn(l, p)));
                } else {
                    for (FfnProj p : kFfnProjs) {
                        if (const Tensor* a = experts[i].find(names::adapter_a(l, p))) {
                            v.emplace_back(names::ffn_lora_a(l, i, p), *a);
                            v.emplace_back(names::ffn_lora_b(l, i, p), experts[i].at(names::adapter_b(l, p)));
                        }
                    }
                }
                if (recipe.mix_attention) {
                    const TensorMap& src = full ? experts[i] : base;
                    for (AttnProj p : kAttnProjs) v.emplace_back(names::attn_expert(l, i, p), src.at(names::attn(l, p)));
                }
            }
        } catch (...) {
            failures[l] = std::current_exception();
        }
    }
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
    for (auto& layer : per_layer)
        for (auto& [name, t] : layer) out.insert(std::move(name), std::move(t));

    const DType router_dtype = base.at(names::kEmbed).dtype();
    for (const auto& site : bank.sites)
        out.insert(site.tensor_name(), Tensor::from_values(router_dtype, {site.rows, site.cols},
                                                           std::span<const double>(site.values)));

    write_arch_metadata(arch, out.metadata());
    write_recipe_metadata(recipe, out.metadata(), lora_rank);
    if (!report.warnings.empty()) out.metadata()["moe.compat.warnings"] = report.describe();
    return out;
}

TensorMap swap_expert(const TensorMap& moe, int slot, const TensorMap& source, const SwapSource& spec) {
    if (!has_recipe_metadata(moe.metadata())) throw Error("swap needs a composed MOE checkpoint");
    const MoeRecipe recipe = read_recipe_metadata(moe.metadata());
    const int n = recipe.num_experts();
    if (slot < 0 || slot >= n)
        throw Error("slot out of range: slot " + std::to_string(slot) + " for " + std::to_string(n) + " experts");
    const ArchDescriptor arch = infer_arch(moe);

    MoeRecipe updated = recipe;
    updated.experts[slot] =
        ExpertSpec{spec.kind, spec.source, spec.lora_alpha, spec.positive_prompts, spec.negative_prompts};
    updated.validate();

    std::optional<int> lora_rank;
    if (spec.kind == ExpertKind::Full) {
        check_not_composed(source, "swap source");
        CompatReport report = check_compatibility(arch, {infer_arch(source)});
        if (!report.compatible) throw Error("incompatible source: " + report.describe());
    } else {
        if (recipe.mix_attention)
            throw Error("cannot swap a LoRA expert into an attention-mixed checkpoint: base attention is not stored");
        if (!moe.contains(names::ffn(0, FfnProj::Gate)))
            throw Error("cannot swap in a LoRA expert: checkpoint holds no base FFN tensors");
        lora_rank = validate_adapter(moe, source);
    }
    for (int i = 0; i < n; ++i) {
        if (i == slot || updated.experts[i].kind != ExpertKind::Lora) continue;
        const int r = std::stoi(moe.metadata_or("moe.lora.rank", "0"));
        if (lora_rank && *lora_rank != r)
            throw Error("all LoRA experts must share one rank (" + std::to_string(r) + " vs " +
                        std::to_string(*lora_rank) + ")");
        lora_rank = r;
    }

    TensorMap out = moe;
    const bool keep_base_ffn = lora_rank.has_value();
    for (int l = 0; l < arch.num_layers; ++l) {
        const std::string ffn_ns = names::layer_prefix(l) + "ffn.experts." + std::to_string(slot) + ".";
        const std::string attn_ns = names::layer_prefix(l) + "attn.experts." + std::to_string(slot) + ".";
        std::vector<std::string> doomed;
        for_layer(moe, l, [&](const std::string& name, const Tensor&) {
            if (name.starts_with(ffn_ns) || (recipe.mix_attention && name.starts_with(attn_ns)))
                doomed.push_back(name);
            if (!keep_base_ffn && is_base_ffn(name, l)) doomed.push_back(name);
        });
        for (const auto& name : doomed) out.erase(name);

        if (spec.kind == ExpertKind::Full) {
            for (FfnProj p : kFfnProjs) out.insert(names::ffn_expert(l, slot, p), source.at(names::ffn(l, p)));
            if (recipe.mix_attention)
                for (AttnProj p : kAttnProjs) out.insert(names::attn_expert(l, slot, p), source.at(names::attn(l, p)));
        } else {
            for (FfnProj p : kFfnProjs)
                if (const Tensor* a = source.find(names::adapter_a(l, p))) {
                    out.insert(names::ffn_lora_a(l, slot, p), *a);
                    out.insert(names::ffn_lora_b(l, slot, p), source.at(names::adapter_b(l, p)));
                }
        }
    }
    erase_recipe_keys(out.metadata());
    write_recipe_metadata(updated, out.metadata(), lora_rank);
    return out;
}

TensorMap extract_expert(const TensorMap& moe, int slot) {
    const MoeRecipe recipe = read_recipe_metadata(moe.metadata());
    if (slot < 0 || slot >= recipe.num_experts())
        throw Error("slot out of range: slot " + std::to_string(slot) + " for " +
                    std::to_string(recipe.num_experts()) + " experts");
    if (recipe.experts[slot].kind != ExpertKind::Full) throw Error("slot " + std::to_string(slot) + " holds a LoRA expert");
    const ArchDescriptor arch = infer_arch(moe);
    TensorMap out;
    for (const auto& [name, t] : moe.tensors())
        if (!names::layer_of(name)) out.insert(name, t);
    for (int l = 0; l < arch.num_layers; ++l) {
        out.insert(names::attn_norm(l), moe.at(names::attn_norm(l)));
        out.insert(names::ffn_norm(l), moe.at(names::ffn_norm(l)));
        for (AttnProj p : kAttnProjs)
            out.insert(names::attn(l, p),
                       moe.at(recipe.mix_attention ? names::attn_expert(l, slot, p) : names::attn(l, p)));
        for (FfnProj p : kFfnProjs) out.insert(names::ffn(l, p), moe.at(names::ffn_expert(l, slot, p)));
    }
    write_arch_metadata(arch, out.metadata());
    return out;
}

}  // namespace moeforge
