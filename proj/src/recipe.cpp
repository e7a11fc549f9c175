// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/recipe.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "moeforge/error.hpp"

namespace moeforge {

std::string_view to_string(Gating g) {
    switch (g) {
        case Gating::Gateless: return "gateless";
        case Gating::Noisy: return "noisy";
        case Gating::Trained: return "trained";
        case Gating::HiddenRepr: return "hidden_repr";
    }
    return "?";
}

std::string_view to_string(Granularity g) { return g == Granularity::Ffn ? "ffn" : "fgmlp"; }
std::string_view to_string(ExpertKind k) { return k == ExpertKind::Full ? "full" : "lora"; }

Gating parse_gating(std::string_view s) {
    if (s == "gateless" || s == "gate-less" || s == "gate-free") return Gating::Gateless;
    if (s == "noisy") return Gating::Noisy;
    if (s == "trained") return Gating::Trained;
    if (s == "hidden_repr") return Gating::HiddenRepr;
    throw Error("unknown gating mode: " + std::string(s));
}

Granularity parse_granularity(std::string_view s) {
    if (s == "ffn") return Granularity::Ffn;
    if (s == "fgmlp") return Granularity::Fgmlp;
    throw Error("unknown granularity: " + std::string(s));
}

ExpertKind parse_expert_kind(std::string_view s) {
    if (s == "full") return ExpertKind::Full;
    if (s == "lora") return ExpertKind::Lora;
    throw Error("unknown expert kind: " + std::string(s));
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void MoeRecipe::validate() const {
    const int n = num_experts();
    if (n < 1) throw Error("recipe invariant violated: number of experts N must be >= 1");
    if (routed()) {
        if (top_k < 1) throw Error("recipe invariant violated: top_k must be >= 1");
        if (top_k > n)
            throw Error("recipe invariant violated: top_k (" + std::to_string(top_k) +
                        ") must be <= N (" + std::to_string(n) + ")");
    }
    if (always_on && (*always_on < 0 || *always_on >= n))
        throw Error("recipe invariant violated: always_on (" + std::to_string(*always_on) +
                    ") must be < N (" + std::to_string(n) + ")");
    if ((gating == Gating::Noisy || gating == Gating::Trained) && !(noise_sigma > 0))
        throw Error("recipe invariant violated: noise_sigma must be > 0");
    std::optional<double> alpha;
    for (std::size_t i = 0; i < experts.size(); ++i) {
        const auto& e = experts[i];
        if (e.kind == ExpertKind::Lora) {
            if (!e.lora_alpha) throw Error("LoRA expert " + std::to_string(i) + " needs lora_alpha");
            if (alpha && *alpha != *e.lora_alpha)
                throw Error("all LoRA experts must share one lora_alpha");
            alpha = e.lora_alpha;
        }
        if (gating == Gating::HiddenRepr && (e.positive_prompts.empty() || e.negative_prompts.empty()))
            throw Error("hidden_repr router init needs positive and negative prompts for expert " +
                        std::to_string(i));
    }
}

namespace {

constexpr std::string_view kGating = "moe.gating";
constexpr std::string_view kTopK = "moe.top_k";
constexpr std::string_view kSigma = "moe.sigma";
constexpr std::string_view kSeed = "moe.seed";
constexpr std::string_view kGranularity = "moe.granularity";
constexpr std::string_view kMixAttention = "moe.mix_attention";
constexpr std::string_view kAlwaysOn = "moe.always_on";
constexpr std::string_view kNumExperts = "moe.num_experts";
constexpr std::string_view kLoraRank = "moe.lora.rank";
constexpr std::string_view kLoraAlpha = "moe.lora.alpha";

std::string expert_key(std::size_t i, std::string_view field) {
    return "moe.expert." + std::to_string(i) + "." + std::string(field);
}

const std::string& need(const TensorMap::Metadata& meta, std::string_view key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw Error("missing metadata key " + std::string(key));
    return it->second;
}

template <typename Int>
Int parse_int(const std::string& s, std::string_view key) {
    Int v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error("metadata key " + std::string(key) + " is not an integer: " + s);
    return v;
}

double parse_real(const std::string& s, std::string_view key) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error("metadata key " + std::string(key) + " is not a number: " + s);
}

std::vector<std::string> parse_string_list(const std::string& s, std::string_view key) {
    try {
        return nlohmann::json::parse(s).get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
        throw Error("metadata key " + std::string(key) + " is not a JSON string list");
    }
}

}  // namespace

bool has_recipe_metadata(const TensorMap::Metadata& meta) { return meta.contains(kGating); }

void write_recipe_metadata(const MoeRecipe& r, TensorMap::Metadata& meta, std::optional<int> lora_rank) {
    meta[std::string(kGating)] = std::string(to_string(r.gating));
    meta[std::string(kTopK)] = std::to_string(r.top_k);
    meta[std::string(kSigma)] = format_double(r.noise_sigma);
    meta[std::string(kSeed)] = std::to_string(r.seed);
    meta[std::string(kGranularity)] = std::string(to_string(r.granularity));
    meta[std::string(kMixAttention)] = r.mix_attention ? "true" : "false";
    meta[std::string(kAlwaysOn)] = r.always_on ? std::to_string(*r.always_on) : "none";
    meta[std::string(kNumExperts)] = std::to_string(r.experts.size());
    for (std::size_t i = 0; i < r.experts.size(); ++i) {
        const auto& e = r.experts[i];
        meta[expert_key(i, "source")] = e.source;
        meta[expert_key(i, "kind")] = std::string(to_string(e.kind));
        if (!e.positive_prompts.empty())
            meta[expert_key(i, "positive_prompts")] = nlohmann::json(e.positive_prompts).dump();
        if (!e.negative_prompts.empty())
            meta[expert_key(i, "negative_prompts")] = nlohmann::json(e.negative_prompts).dump();
        if (e.kind == ExpertKind::Lora && e.lora_alpha)
            meta[std::string(kLoraAlpha)] = format_double(*e.lora_alpha);
    }
    if (lora_rank) meta[std::string(kLoraRank)] = std::to_string(*lora_rank);
}

MoeRecipe read_recipe_metadata(const TensorMap::Metadata& meta) {
    MoeRecipe r;
    r.gating = parse_gating(need(meta, kGating));
    r.top_k = parse_int<int>(need(meta, kTopK), kTopK);
    r.noise_sigma = parse_real(need(meta, kSigma), kSigma);
    r.seed = parse_int<std::uint64_t>(need(meta, kSeed), kSeed);
    r.granularity = parse_granularity(need(meta, kGranularity));
    const auto& mix = need(meta, kMixAttention);
    if (mix != "true" && mix != "false") throw Error("moe.mix_attention must be true or false");
    r.mix_attention = mix == "true";
    const auto& ao = need(meta, kAlwaysOn);
    if (ao != "none") r.always_on = parse_int<int>(ao, kAlwaysOn);
    const auto n = parse_int<std::size_t>(need(meta, kNumExperts), kNumExperts);
    std::optional<double> alpha;
    if (auto it = meta.find(kLoraAlpha); it != meta.end()) alpha = parse_real(it->second, kLoraAlpha);
    for (std::size_t i = 0; i < n; ++i) {
        ExpertSpec e;
        e.source = need(meta, expert_key(i, "source"));
        e.kind = parse_expert_kind(need(meta, expert_key(i, "kind")));
        if (e.kind == ExpertKind::Lora) e.lora_alpha = alpha;
        if (auto it = meta.find(expert_key(i, "positive_prompts")); it != meta.end())
            e.positive_prompts = parse_string_list(it->second, it->first);
        if (auto it = meta.find(expert_key(i, "negative_prompts")); it != meta.end())
            e.negative_prompts = parse_string_list(it->second, it->first);
        r.experts.push_back(std::move(e));
    }
    return r;
}

nlohmann::json recipe_to_json(const MoeRecipe& r) {
    nlohmann::json j;
    j["gating"] = to_string(r.gating);
    j["top_k"] = r.top_k;
    j["noise_sigma"] = r.noise_sigma;
    j["granularity"] = to_string(r.granularity);
    j["mix_attention"] = r.mix_attention;
    j["always_on"] = r.always_on ? nlohmann::json(*r.always_on) : nlohmann::json(nullptr);
    j["seed"] = r.seed;
    auto experts = nlohmann::json::array();
    for (const auto& e : r.experts) {
        nlohmann::json x;
        x["kind"] = to_string(e.kind);
        x["source"] = e.source;
        if (e.lora_alpha) x["lora_alpha"] = *e.lora_alpha;
        if (!e.positive_prompts.empty()) x["positive_prompts"] = e.positive_prompts;
        if (!e.negative_prompts.empty()) x["negative_prompts"] = e.negative_prompts;
        experts.push_back(std::move(x));
    }
    j["experts"] = std::move(experts);
    return j;
}

MoeRecipe recipe_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known{"gating", "top_k", "noise_sigma", "granularity",
                                                "mix_attention", "always_on", "seed", "experts"};
    if (!j.is_object()) throw Error("recipe must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw Error("unknown recipe field: " + k);
    MoeRecipe r;
    try {
        r.gating = parse_gating(j.at("gating").get<std::string>());
        if (j.contains("top_k")) r.top_k = j["top_k"].get<int>();
        if (j.contains("noise_sigma")) r.noise_sigma = j["noise_sigma"].get<double>();
        if (j.contains("granularity")) r.granularity = parse_granularity(j["granularity"].get<std::string>());
        if (j.contains("mix_attention")) r.mix_attention = j["mix_attention"].get<bool>();
        if (j.contains("always_on") && !j["always_on"].is_null()) r.always_on = j["always_on"].get<int>();
        if (j.contains("seed")) r.seed = j["seed"].get<std::uint64_t>();
        for (const auto& x : j.at("experts")) {
            ExpertSpec e;
            if (x.is_string()) {
                e.source = x.get<std::string>();
            } else {
                e.source = x.at("source").get<std::string>();
                if (x.contains("kind")) e.kind = parse_expert_kind(x["kind"].get<std::string>());
                if (x.contains("lora_alpha")) e.lora_alpha = x["lora_alpha"].get<double>();
                if (x.contains("positive_prompts"))
                    e.positive_prompts = x["positive_prompts"].get<std::vector<std::string>>();
                if (x.contains("negative_prompts"))
                    e.negative_prompts = x["negative_prompts"].get<std::vector<std::string>>();
            }
            r.experts.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed recipe: ") + e.what());
    }
    return r;
}

}  // namespace moeforge
