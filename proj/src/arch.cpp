// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/arch.hpp"

#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

#include "moeforge/error.hpp"
#include "moeforge/naming.hpp"

namespace moeforge {

namespace {

const Tensor& require_2d(const TensorMap& ckpt, const std::string& name) {
    const Tensor* t = ckpt.find(name);
    if (!t) throw Error("missing required tensor: " + name);
    if (t->rank() != 2) throw Error("tensor " + name + " must be 2-D");
    return *t;
}

const Tensor& require_1d(const TensorMap& ckpt, const std::string& name) {
    const Tensor* t = ckpt.find(name);
    if (!t) throw Error("missing required tensor: " + name);
    if (t->rank() != 1) throw Error("tensor " + name + " must be 1-D");
    return *t;
}

int parse_int_meta(const TensorMap& ckpt, const char* key) {
    auto it = ckpt.metadata().find(key);
    if (it == ckpt.metadata().end()) throw Error(std::string("missing metadata key ") + key);
    int v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(std::string("metadata key ") + key + " is not an integer: " + s);
    return v;
}

double parse_double_meta(const TensorMap& ckpt, const char* key, double fallback) {
    auto it = ckpt.metadata().find(key);
    if (it == ckpt.metadata().end()) return fallback;
    try {
        std::size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw Error(std::string("metadata key ") + key + " is not a number: " + it->second);
    }
}

// Every FFN projection tensor of `layer` for projection p: the dense/base one and
// the full expert ones. Routers and LoRA factors are excluded.
std::vector<std::pair<std::string, const Tensor*>> ffn_tensors(const TensorMap& ckpt, int layer,
                                                               FfnProj p) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    const std::string prefix = names::layer_prefix(layer) + "ffn.";
    const std::string suffix = "." + std::string(proj_name(p)) + ".weight";
    for (auto it = ckpt.tensors().lower_bound(prefix); it != ckpt.tensors().end(); ++it) {
        const std::string& name = it->first;
        if (!name.starts_with(prefix)) break;
        if (!name.ends_with(suffix) || name.find(".router.") != std::string::npos) continue;
        if (name != names::ffn(layer, p) && !names::expert_of(name)) continue;
        out.emplace_back(name, &it->second);
    }
    return out;
}

const Tensor& first_attn(const TensorMap& ckpt, int layer, AttnProj p) {
    if (auto* t = ckpt.find(names::attn(layer, p))) return *t;
    return require_2d(ckpt, names::attn_expert(layer, 0, p));
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void ArchDescriptor::validate() const {
    if (num_layers <= 0) throw Error("num_layers must be positive");
    if (hidden_size <= 0) throw Error("hidden_size must be positive");
    if (ffn_intermediate_size <= 0) throw Error("ffn_intermediate_size must be positive");
    if (num_heads <= 0) throw Error("num_heads must be positive");
    if (num_kv_heads <= 0) throw Error("num_kv_heads must be positive");
    if (vocab_size <= 0) throw Error("vocab_size must be positive");
    if (hidden_size % num_heads != 0) throw Error("hidden_size must be divisible by num_heads");
    if (num_heads % num_kv_heads != 0) throw Error("num_heads must be divisible by num_kv_heads");
    if (head_dim() % 2 != 0) throw Error("head_dim must be even for rotary embedding");
    if (!(norm_eps > 0)) throw Error("norm_eps must be positive");
}

ArchDescriptor infer_arch(const TensorMap& ckpt) {
    ArchDescriptor a;
    const Tensor& embed = require_2d(ckpt, std::string(names::kEmbed));
    a.vocab_size = static_cast<int>(embed.dim(0));
    a.hidden_size = static_cast<int>(embed.dim(1));

    std::set<int> layers;
    for (const auto& [name, t] : ckpt.tensors())
        if (auto l = names::layer_of(name)) layers.insert(*l);
    if (layers.empty()) throw Error("missing required tensors: checkpoint has no layers");
    a.num_layers = static_cast<int>(layers.size());
    if (*layers.begin() != 0 || *layers.rbegin() != a.num_layers - 1)
        throw Error("layer indices are not contiguous from 0");

    a.num_heads = parse_int_meta(ckpt, kMetaNumHeads);
    if (a.num_heads <= 0 || a.hidden_size % a.num_heads != 0)
        throw Error("arch.num_heads must divide hidden_size");
    a.norm_eps = parse_double_meta(ckpt, kMetaNormEps, 1e-5);
    a.rope_theta = parse_double_meta(ckpt, kMetaRopeTheta, 10000.0);

    const Tensor& k0 = first_attn(ckpt, 0, AttnProj::K);
    const int head_dim = a.hidden_size / a.num_heads;
    if (k0.dim(0) % head_dim != 0) throw Error("k projection rows are not a multiple of head_dim");
    a.num_kv_heads = static_cast<int>(k0.dim(0) / head_dim);

    const auto check = [](bool ok, const std::string& what) {
        if (!ok) throw Error("inconsistent " + what);
    };

    a.ffn_intermediate_size = -1;
    for (int l = 0; l < a.num_layers; ++l) {
        check(require_1d(ckpt, names::attn_norm(l)).dim(0) == a.hidden_size, "hidden_size (attn_norm)");
        check(require_1d(ckpt, names::ffn_norm(l)).dim(0) == a.hidden_size, "hidden_size (ffn_norm)");
        for (AttnProj p : kAttnProjs) {
            const Tensor& t = first_attn(ckpt, l, p);
            const bool kv = (p == AttnProj::K || p == AttnProj::V);
            const long long rows = p == AttnProj::O ? a.hidden_size : (kv ? a.kv_dim() : a.hidden_size);
            const long long cols = p == AttnProj::O ? a.hidden_size : a.hidden_size;
            check(t.dim(0) == rows && t.dim(1) == cols, "attention shape in layer " + std::to_string(l));
        }
        const auto gates = ffn_tensors(ckpt, l, FfnProj::Gate);
        if (gates.empty()) throw Error("missing required tensor: " + names::ffn(l, FfnProj::Gate));
        const int inter = static_cast<int>(gates.front().second->dim(0));
        if (a.ffn_intermediate_size < 0) a.ffn_intermediate_size = inter;
        for (FfnProj p : kFfnProjs) {
            const auto ts = ffn_tensors(ckpt, l, p);
            if (ts.empty()) throw Error("missing required tensor: " + names::ffn(l, p));
            for (const auto& [name, t] : ts) {
                if (t->rank() != 2) throw Error("tensor " + name + " must be 2-D");
                const long long rows = p == FfnProj::Down ? t->dim(1) : t->dim(0);
                const long long hidden = p == FfnProj::Down ? t->dim(0) : t->dim(1);
                check(rows == a.ffn_intermediate_size, "ffn_intermediate_size");
                check(hidden == a.hidden_size, "hidden_size (" + name + ")");
            }
        }
    }
    check(require_1d(ckpt, std::string(names::kFinalNorm)).dim(0) == a.hidden_size, "hidden_size (final_norm)");
    const Tensor& head = require_2d(ckpt, std::string(names::kLmHead));
    check(head.dim(0) == a.vocab_size && head.dim(1) == a.hidden_size, "lm_head shape");
    a.validate();
    return a;
}

void write_arch_metadata(const ArchDescriptor& arch, TensorMap::Metadata& meta) {
    meta[kMetaNumHeads] = std::to_string(arch.num_heads);
    meta[kMetaNumKvHeads] = std::to_string(arch.num_kv_heads);
    meta[kMetaNormEps] = fmt_double(arch.norm_eps);
    meta[kMetaRopeTheta] = fmt_double(arch.rope_theta);
}

std::string CompatReport::describe() const {
    std::ostringstream out;
    for (const auto& m : mismatches)
        out << "expert " << m.expert_index << ": " << m.field << " " << m.expert_value
            << " != base " << m.base_value << "\n";
    for (const auto& m : warnings)
        out << "warning: expert " << m.expert_index << ": " << m.field << " " << m.expert_value
            << " != base " << m.base_value << "\n";
    return out.str();
}

CompatReport check_compatibility(const ArchDescriptor& base, const std::vector<ArchDescriptor>& experts,
                                 bool embeddings_trained) {
    CompatReport report;
    for (std::size_t i = 0; i < experts.size(); ++i) {
        const auto& e = experts[i];
        const int idx = static_cast<int>(i);
        auto cmp = [&](const char* field, long long b, long long v) {
            if (b != v) report.mismatches.push_back({field, b, idx, v});
        };
        cmp("num_layers", base.num_layers, e.num_layers);
        cmp("hidden_size", base.hidden_size, e.hidden_size);
        cmp("ffn_intermediate_size", base.ffn_intermediate_size, e.ffn_intermediate_size);
        cmp("num_heads", base.num_heads, e.num_heads);
        cmp("num_kv_heads", base.num_kv_heads, e.num_kv_heads);
        if (base.norm_eps != e.norm_eps) {
            // reported in units of 1e-12 so the record stays integral
            report.mismatches.push_back({"norm_eps", static_cast<long long>(base.norm_eps * 1e12), idx,
                                         static_cast<long long>(e.norm_eps * 1e12)});
        }
        if (base.vocab_size != e.vocab_size) {
            ArchMismatch m{"vocab_size", base.vocab_size, idx, e.vocab_size};
            (embeddings_trained ? report.mismatches : report.warnings).push_back(m);
        }
    }
    report.compatible = report.mismatches.empty();
    return report;
}

ArchDescriptor mistral7b_arch() {
    ArchDescriptor a;
    a.num_layers = 32;
    a.hidden_size = 4096;
    a.ffn_intermediate_size = 14336;
    a.num_heads = 32;
    a.num_kv_heads = 8;
    a.vocab_size = 32000;
    a.norm_eps = 1e-5;
    a.rope_theta = 10000.0;
    return a;
}

}  // namespace moeforge
