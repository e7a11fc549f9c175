// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "moeforge/analysis.hpp"
#include "moeforge/compose.hpp"
#include "moeforge/error.hpp"
#include "moeforge/kernels.hpp"
#include "moeforge/naming.hpp"
#include "moeforge/rng.hpp"
#include "moeforge/runtime.hpp"
#include "moeforge/synthetic.hpp"
#include "moeforge/training.hpp"

namespace moeforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

ArchDescriptor arch_from_json(const json& j) {
    if (!j.is_object()) throw Error("architecture file must be a JSON object");
    static const char* known[] = {"num_layers", "hidden_size", "ffn_intermediate_size", "num_heads",
                                  "num_kv_heads", "vocab_size", "norm_eps", "rope_theta", "name"};
    for (const auto& [k, v] : j.items())
        if (std::find(std::begin(known), std::end(known), k) == std::end(known))
            throw Error("unknown architecture field: " + k);
    try {
        ArchDescriptor a;
        a.num_layers = j.at("num_layers").get<int>();
        a.hidden_size = j.at("hidden_size").get<int>();
        a.ffn_intermediate_size = j.at("ffn_intermediate_size").get<int>();
        a.num_heads = j.at("num_heads").get<int>();
        a.num_kv_heads = j.value("num_kv_heads", a.num_heads);
        a.vocab_size = j.at("vocab_size").get<int>();
        a.norm_eps = j.value("norm_eps", 1e-5);
        a.rope_theta = j.value("rope_theta", 10000.0);
        a.validate();
        return a;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed architecture file: ") + e.what());
    }
}

json arch_to_json(const ArchDescriptor& a) {
    return {{"num_layers", a.num_layers},     {"hidden_size", a.hidden_size},
            {"ffn_intermediate_size", a.ffn_intermediate_size},
            {"num_heads", a.num_heads},       {"num_kv_heads", a.num_kv_heads},
            {"vocab_size", a.vocab_size},     {"norm_eps", a.norm_eps},
            {"rope_theta", a.rope_theta}};
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error("not an integer list: " + text);
        }
    }
    if (out.empty()) throw Error("empty integer list");
    return out;
}

namespace {

struct Context {
    std::ostream& out;
    std::ostream& err;
    bool json = false;
    std::optional<std::uint64_t> seed;
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path.string() + ": JSON parse failure: " + e.what());
    }
}

TensorMap load_canonical(const fs::path& path) {
    TensorMap m = load_checkpoint(path);
    if (uses_hub_names(m)) m = canonicalize_names(m);
    return m;
}

ArchDescriptor load_arch(const std::string& spec) {
    if (spec == "mistral7b") return mistral7b_arch();
    return arch_from_json(read_json_file(spec));
}

DType parse_compute_dtype(const std::string& s) {
    if (s == "f32" || s == "F32") return DType::F32;
    if (s == "f64" || s == "F64") return DType::F64;
    throw Error("compute dtype must be f32 or f64");
}

std::optional<double> adapter_alpha(const TensorMap& adapter, const fs::path& path) {
    for (const char* key : {"lora.alpha", "lora_alpha"}) {
        auto it = adapter.metadata().find(key);
        if (it != adapter.metadata().end()) return std::stod(it->second);
    }
    const fs::path config = path.parent_path() / "adapter_config.json";
    if (fs::exists(config)) {
        const json j = read_json_file(config);
        if (j.contains("lora_alpha")) return j["lora_alpha"].get<double>();
    }
    return std::nullopt;
}

std::vector<int> tokens_from(const std::string& tokens, const std::string& text) {
    if (!tokens.empty() && !text.empty()) throw Error("give either --tokens or --text, not both");
    if (!tokens.empty()) return parse_int_list(tokens);
    if (!text.empty()) return ByteTokenizer::encode(text, true);
    throw Error("one of --tokens or --text is required");
}

// JSONL: {"tokens": [...], "prompt_length": k} | {"prompt": "...", "response": "..."} | {"text": "..."}
std::vector<Example> read_corpus(const fs::path& path, Regime regime) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<Example> corpus;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            std::vector<int> ids;
            std::size_t prompt_len = 0;
            if (j.contains("tokens")) {
                ids = j["tokens"].get<std::vector<int>>();
                prompt_len = j.value("prompt_length", std::size_t{0});
            } else if (j.contains("prompt")) {
                ids = ByteTokenizer::encode(j["prompt"].get<std::string>(), true);
                prompt_len = ids.size();
                for (int b : ByteTokenizer::encode(j.value("response", std::string()), false)) ids.push_back(b);
            } else if (j.contains("text")) {
                ids = ByteTokenizer::encode(j["text"].get<std::string>(), true);
            } else {
                throw Error("expected tokens, prompt or text");
            }
            corpus.push_back(Example::from_sequence(ids, prompt_len, regime));
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (corpus.empty()) throw Error("empty corpus: " + path.string());
    return corpus;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << content;
    if (!f) throw Error("failed writing " + path.string());
}

json decision_json(const RouteRecord& r) {
    return {{"layer", r.layer},
            {"site", std::string(to_string(r.site))},
            {"token", r.token},
            {"top_expert", r.top_expert},
            {"indices", r.decision.indices},
            {"weights", r.decision.weights}};
}

std::string trace_csv(const RoutingTrace& trace) {
    std::ostringstream s;
    s << "layer,site,token,top_expert,indices,weights\n";
    for (const auto& r : trace.records) {
        s << r.layer << ',' << to_string(r.site) << ',' << r.token << ',' << r.top_expert << ',';
        for (std::size_t j = 0; j < r.decision.indices.size(); ++j) s << (j ? ";" : "") << r.decision.indices[j];
        s << ',';
        for (std::size_t j = 0; j < r.decision.weights.size(); ++j)
            s << (j ? ";" : "") << format_double(r.decision.weights[j]);
        s << '\n';
    }
    return s.str();
}

// ---------------------------------------------------------------------------

struct ComposeArgs {
    std::string base, recipe, out;
    bool embeddings_trained = false;
};

void run_compose(const Context& ctx, const ComposeArgs& a) {
    const TensorMap base = load_canonical(a.base);
    MoeRecipe recipe = recipe_from_json(read_json_file(a.recipe));
    if (ctx.seed) recipe.seed = *ctx.seed;
    const fs::path dir = fs::path(a.recipe).parent_path();
    std::vector<TensorMap> experts;
    for (auto& e : recipe.experts) {
        fs::path p(e.source);
        if (p.is_relative()) p = dir / p;
        experts.push_back(load_canonical(p));
        if (e.kind == ExpertKind::Lora && !e.lora_alpha) e.lora_alpha = adapter_alpha(experts.back(), p);
    }
    ComposeOptions opts;
    opts.embeddings_trained = a.embeddings_trained;
    const TensorMap moe = compose_moe(base, recipe, experts, opts);
    save_checkpoint(moe, a.out);
    const std::string warnings = moe.metadata_or("moe.compat.warnings", "");
    if (ctx.json) {
        ctx.out << json{{"out", a.out},
                        {"tensors", moe.size()},
                        {"params", moe.parameter_count()},
                        {"warnings", warnings}}
                       .dump()
                << '\n';
    } else {
        if (!warnings.empty()) ctx.err << warnings << '\n';
        ctx.out << "wrote " << a.out << " (" << moe.size() << " tensors, " << moe.parameter_count()
                << " parameters)\n";
    }
}

struct SwapArgs {
    std::string moe, expert, out, kind = "full", source;
    int slot = 0;
    std::optional<double> alpha;
};

void run_swap(const Context& ctx, const SwapArgs& a) {
    const TensorMap moe = load_checkpoint(a.moe);
    const TensorMap source = load_canonical(a.expert);
    const MoeRecipe recipe = read_recipe_metadata(moe.metadata());
    SwapSource spec;
    spec.kind = parse_expert_kind(a.kind);
    spec.source = a.source.empty() ? a.expert : a.source;
    spec.lora_alpha = a.alpha;
    if (spec.kind == ExpertKind::Lora && !spec.lora_alpha) spec.lora_alpha = adapter_alpha(source, a.expert);
    if (a.slot >= 0 && a.slot < recipe.num_experts()) {
        spec.positive_prompts = recipe.experts[a.slot].positive_prompts;
        spec.negative_prompts = recipe.experts[a.slot].negative_prompts;
    }
    const TensorMap out = swap_expert(moe, a.slot, source, spec);
    save_checkpoint(out, a.out);
    if (ctx.json) {
        ctx.out << json{{"out", a.out}, {"slot", a.slot}, {"source", spec.source}}.dump() << '\n';
    } else {
        ctx.out << "swapped slot " << a.slot << " <- " << spec.source << ", wrote " << a.out << '\n';
    }
}

struct InspectArgs {
    std::string ckpt, recipe_out;
};

void run_inspect(const Context& ctx, const InspectArgs& a) {
    const TensorMap m = load_checkpoint(a.ckpt);
    const TensorMap c = uses_hub_names(m) ? canonicalize_names(m) : m;
    const ArchDescriptor arch = infer_arch(c);
    std::optional<MoeRecipe> recipe;
    if (has_recipe_metadata(c.metadata())) recipe = read_recipe_metadata(c.metadata());
    std::map<std::string, std::size_t> dtypes;
    for (const auto& [name, t] : c.tensors()) ++dtypes[std::string(dtype_name(t.dtype()))];
    if (!a.recipe_out.empty()) {
        if (!recipe) throw Error(a.ckpt + " holds no recipe");
        write_text_file(a.recipe_out, recipe_to_json(*recipe).dump(2) + "\n");
    }
    if (ctx.json) {
        json j{{"arch", arch_to_json(arch)},
               {"tensors", c.size()},
               {"params", c.parameter_count()},
               {"dtypes", dtypes},
               {"metadata", c.metadata()},
               {"recipe", recipe ? recipe_to_json(*recipe) : json(nullptr)}};
        ctx.out << j.dump(2) << '\n';
        return;
    }
    ctx.out << "checkpoint: " << a.ckpt << '\n'
            << "layers " << arch.num_layers << ", hidden " << arch.hidden_size << ", intermediate "
            << arch.ffn_intermediate_size << ", heads " << arch.num_heads << "/" << arch.num_kv_heads << ", vocab "
            << arch.vocab_size << '\n'
            << "tensors " << c.size() << ", parameters " << c.parameter_count() << '\n';
    for (const auto& [d, n] : dtypes) ctx.out << "  " << d << ": " << n << " tensors\n";
    if (recipe) {
        ctx.out << "recipe:\n" << recipe_to_json(*recipe).dump(2) << '\n';
    } else {
        ctx.out << "dense checkpoint (no recipe)\n";
    }
}

struct InferArgs {
    std::string ckpt, tokens, text, dtype = "f32", logits_out, trace_out;
};

template <typename T>
void infer_as(const Context& ctx, const InferArgs& a, const TensorMap& ckpt, const std::vector<int>& ids) {
    const Model<T> model = Model<T>::from_checkpoint(ckpt);
    const auto res = model_forward(model, ids);
    const int v = res.logits.cols;
    if (!a.logits_out.empty()) {
        std::ostringstream s;
        s << std::setprecision(17);
        for (int t = 0; t < res.logits.rows; ++t) {
            for (int i = 0; i < v; ++i) s << (i ? "," : "") << static_cast<double>(res.logits.at(t, i));
            s << '\n';
        }
        write_text_file(a.logits_out, s.str());
    }
    if (!a.trace_out.empty()) write_text_file(a.trace_out, trace_csv(res.trace));
    std::vector<int> next(res.logits.rows);
    for (int t = 0; t < res.logits.rows; ++t) {
        const auto row = res.logits.row(t);
        next[t] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    if (ctx.json) {
        json logits = json::array();
        for (int t = 0; t < res.logits.rows; ++t) {
            std::vector<double> row(res.logits.row(t).begin(), res.logits.row(t).end());
            logits.push_back(row);
        }
        json trace = json::array();
        for (const auto& r : res.trace.records) trace.push_back(decision_json(r));
        ctx.out << json{{"tokens", ids}, {"next", next}, {"logits", logits}, {"trace", trace}}.dump() << '\n';
        return;
    }
    ctx.out << "position,token,next,logit\n";
    for (int t = 0; t < res.logits.rows; ++t)
        ctx.out << t << ',' << ids[t] << ',' << next[t] << ',' << format_double(res.logits.at(t, next[t])) << '\n';
}

void run_infer(const Context& ctx, const InferArgs& a) {
    const TensorMap ckpt = load_canonical(a.ckpt);
    const auto ids = tokens_from(a.tokens, a.text);
    if (parse_compute_dtype(a.dtype) == DType::F64) {
        infer_as<double>(ctx, a, ckpt, ids);
    } else {
        infer_as<float>(ctx, a, ckpt, ids);
    }
}

struct TrainArgs {
    std::string ckpt, data, out, loss_csv, trainable = "router", regime = "instruct", optimizer = "sgd";
    bool synthetic = false;
    TrainConfig cfg;
};

void run_train(const Context& ctx, TrainArgs a) {
    a.cfg.trainable = parse_trainable(a.trainable);
    a.cfg.regime = parse_regime(a.regime);
    a.cfg.optimizer = parse_optimizer(a.optimizer);
    if (ctx.seed) a.cfg.seed = *ctx.seed;
    TensorMap ckpt;
    std::vector<Example> corpus;
    std::optional<TwoPopulationTask> task;
    if (a.synthetic) {
        if (!a.ckpt.empty() || !a.data.empty()) throw Error("--synthetic builds its own checkpoint and corpus");
        TwoPopulationOptions o;
        o.seed = a.cfg.seed;
        o.regime = a.cfg.regime;
        task = make_two_population_task(o);
        ckpt = task->moe;
        corpus = task->corpus;
    } else {
        if (a.ckpt.empty() || a.data.empty()) throw Error("train-routers needs --ckpt and --data (or --synthetic)");
        ckpt = load_canonical(a.ckpt);
        corpus = read_corpus(a.data, a.cfg.regime);
    }
    const TrainResult res = train_routers(ckpt, corpus, a.cfg);
    save_checkpoint(res.checkpoint, a.out);
    if (!a.loss_csv.empty()) {
        std::ostringstream s;
        write_loss_csv(res.curve, s);
        write_text_file(a.loss_csv, s.str());
    }
    json j{{"out", a.out},
           {"steps", res.curve.size()},
           {"first_loss", res.curve.empty() ? 0.0 : res.curve.front().loss},
           {"final_loss", res.curve.empty() ? 0.0 : res.curve.back().loss}};
    if (task) {
        const auto before = routing_accuracy(task->moe, *task);
        const auto after = routing_accuracy(res.checkpoint, *task);
        j["routing_accuracy_before"] = before.overall;
        j["routing_accuracy_after"] = after.overall;
    }
    if (ctx.json) {
        ctx.out << j.dump() << '\n';
        return;
    }
    ctx.out << "trained " << j["steps"] << " steps, loss " << format_double(j["first_loss"].get<double>()) << " -> "
            << format_double(j["final_loss"].get<double>()) << ", wrote " << a.out << '\n';
    if (task)
        ctx.out << "routing accuracy " << format_double(j["routing_accuracy_before"].get<double>()) << " -> "
                << format_double(j["routing_accuracy_after"].get<double>()) << '\n';
}

struct StatsArgs {
    std::string ckpt, data, tokens, text, site, heatmap_out, dtype = "f32";
};

void run_stats(const Context& ctx, const StatsArgs& a) {
    const TensorMap ckpt = load_canonical(a.ckpt);
    std::vector<std::vector<int>> sequences;
    if (!a.data.empty()) {
        for (const auto& ex : read_corpus(a.data, Regime::Pretrain)) {
            auto seq = ex.inputs;
            seq.push_back(ex.targets.back());
            sequences.push_back(std::move(seq));
        }
    } else {
        sequences.push_back(tokens_from(a.tokens, a.text));
    }
    RoutingTrace trace;
    int n = 0;
    auto collect = [&](auto tag) {
        using T = decltype(tag);
        const Model<T> model = Model<T>::from_checkpoint(ckpt);
        n = model.num_experts();
        for (const auto& s : sequences) trace.append(model_forward(model, s).trace);
    };
    if (parse_compute_dtype(a.dtype) == DType::F64) {
        collect(double{});
    } else {
        collect(float{});
    }
    std::optional<Site> site;
    if (!a.site.empty()) site = parse_site(a.site);
    const HeatmapTable table = routing_heatmap(trace, n, site);
    std::ostringstream csv;
    write_heatmap_csv(table, csv);
    if (!a.heatmap_out.empty()) write_text_file(a.heatmap_out, csv.str());
    if (ctx.json) {
        ctx.out << json{{"site", std::string(to_string(table.site))},
                        {"num_experts", table.num_experts},
                        {"tokens", table.tokens},
                        {"fraction", table.fraction}}
                       .dump()
                << '\n';
    } else {
        ctx.out << csv.str();
    }
}

struct EstimateArgs {
    std::string arch = "mistral7b", modes = "gateless,noisy", ns = "2,4,6,8", granularity = "ffn", dtype = "f16", out;
    int k = 2;
    double budget = kDefaultBudgetGb;
    bool mix_attention = false;
};

void run_estimate(const Context& ctx, const EstimateArgs& a) {
    const ArchDescriptor arch = load_arch(a.arch);
    std::string upper = a.dtype;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    const DType dtype = parse_dtype(upper);
    std::vector<CostReport> reports;
    std::stringstream ms(a.modes);
    std::string mode;
    while (std::getline(ms, mode, ',')) {
        for (int n : parse_int_list(a.ns)) {
            MoeRecipe r;
            r.gating = parse_gating(mode);
            r.top_k = a.k;
            r.granularity = parse_granularity(a.granularity);
            r.mix_attention = a.mix_attention;
            r.experts.assign(n, ExpertSpec{ExpertKind::Full, "expert", std::nullopt, {"x"}, {"y"}});
            reports.push_back(cost_estimate(arch, r));
        }
    }
    const CostComparison cmp = compare_cost_tables(reports, dtype, a.budget);
    std::ostringstream csv;
    write_cost_grid_csv(cmp.rows, csv);
    if (!a.out.empty()) write_text_file(a.out, csv.str());
    if (ctx.json) {
        json rows = json::array(), trends = json::array();
        for (const auto& r : cmp.rows)
            rows.push_back({{"mode", r.mode},
                            {"N", r.num_experts},
                            {"total_params", r.total_params},
                            {"active_params", r.active_params},
                            {"ffn_flops", r.ffn_flops},
                            {"router_flops", r.router_flops},
                            {"memory_gb", r.memory_gb},
                            {"over_budget", r.over_budget}});
        for (const auto& t : cmp.trends)
            trends.push_back({{"mode", t.mode},
                              {"first_n", t.first_n},
                              {"last_n", t.last_n},
                              {"total_flops_ratio", t.total_flops_ratio},
                              {"ffn_flops_ratio", t.ffn_flops_ratio},
                              {"memory_gb_per_two_experts", t.memory_gb_per_two_experts}});
        ctx.out << json{{"rows", rows}, {"trends", trends}}.dump() << '\n';
    } else if (a.out.empty()) {
        ctx.out << csv.str();
    } else {
        ctx.out << "wrote " << a.out << '\n';
    }
}

struct CheckGradArgs {
    std::string ckpt, data, trainable = "router";
    int subset = 64, length = 8, count = 2;
    double eps = 1e-4;
    bool canary = false;
};

void run_check_grad(const Context& ctx, const CheckGradArgs& a) {
    const TensorMap ckpt = load_canonical(a.ckpt);
    const Model<double> model = Model<double>::from_checkpoint(ckpt);
    Batch batch;
    const std::uint64_t seed = ctx.seed.value_or(0);
    if (!a.data.empty()) {
        batch.examples = read_corpus(a.data, Regime::Pretrain);
    } else {
        SplitMix64 rng(seed);
        for (int i = 0; i < a.count; ++i) {
            std::vector<int> ids(a.length);
            for (int& t : ids) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(model.arch.vocab_size)));
            batch.examples.push_back(Example::from_sequence(ids, 0, Regime::Pretrain));
        }
    }
    FiniteDiffConfig cfg;
    cfg.trainable = parse_trainable(a.trainable);
    cfg.subset = a.subset;
    cfg.eps = a.eps;
    cfg.seed = seed;
    if (a.canary)
        cfg.corrupt = [](GradMap& g) {
            for (auto& [name, m] : g)
                for (double& v : m.data) v += 0.1;
        };
    const FiniteDiffReport rep = finite_diff_check(model, batch, cfg);
    if (ctx.json) {
        ctx.out << json{{"max_rel_error", rep.max_rel_error},
                        {"checked", rep.checked},
                        {"skipped", rep.skipped},
                        {"worst_entry", rep.worst_entry}}
                       .dump()
                << '\n';
    } else {
        ctx.out << "max relative error " << format_double(rep.max_rel_error) << " over " << rep.checked
                << " entries (" << rep.skipped << " skipped at selection boundaries), worst " << rep.worst_entry
                << '\n';
    }
}

void apply_threads(int threads) {
    if (threads <= 0) {
        if (const char* env = std::getenv("MOEFORGE_THREADS")) {
            try {
                threads = std::stoi(env);
            } catch (const std::exception&) {
                throw Error(std::string("MOEFORGE_THREADS is not an integer: ") + env);
            }
        }
    }
    kernels::set_num_threads(threads);
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Compose Mixture-of-Domain-Experts checkpoints from dense experts.", "moeforge"};
    app.require_subcommand(1);
    bool json_out = false;
    std::uint64_t seed = 0;
    int threads = 0;
    app.add_flag("--json", json_out, "Print machine-readable JSON");
    auto* seed_opt = app.add_option("--seed", seed, "Seed for every random draw");
    app.add_option("--threads", threads, "Worker thread cap (falls back to MOEFORGE_THREADS)");

    ComposeArgs ca;
    auto* compose = app.add_subcommand("compose", "Build an MOE checkpoint from a base and a recipe");
    compose->add_option("--base", ca.base, "Dense base checkpoint")->required();
    compose->add_option("--recipe", ca.recipe, "Recipe JSON")->required();
    compose->add_option("--out", ca.out, "Output checkpoint")->required();
    compose->add_flag("--embeddings-trained", ca.embeddings_trained, "Treat vocab mismatches as errors");

    SwapArgs sa;
    auto* swap = app.add_subcommand("swap", "Replace one expert slot");
    swap->add_option("--moe", sa.moe, "Composed checkpoint")->required();
    swap->add_option("--slot", sa.slot, "Expert slot")->required();
    swap->add_option("--expert", sa.expert, "Dense checkpoint or LoRA adapter")->required();
    swap->add_option("--kind", sa.kind, "full or lora");
    swap->add_option("--alpha", sa.alpha, "LoRA alpha");
    swap->add_option("--source", sa.source, "Provenance string (defaults to --expert)");
    swap->add_option("--out", sa.out, "Output checkpoint")->required();

    InspectArgs ia;
    auto* inspect = app.add_subcommand("inspect", "Describe a checkpoint");
    inspect->add_option("--ckpt", ia.ckpt, "Checkpoint")->required();
    inspect->add_option("--recipe-out", ia.recipe_out, "Write the embedded recipe as JSON");

    InferArgs fa;
    auto* infer = app.add_subcommand("infer", "Run the forward pass");
    infer->add_option("--ckpt", fa.ckpt, "Checkpoint")->required();
    infer->add_option("--tokens", fa.tokens, "Comma-separated token ids");
    infer->add_option("--text", fa.text, "Text for the byte tokenizer");
    infer->add_option("--dtype", fa.dtype, "f32 or f64");
    infer->add_option("--logits-out", fa.logits_out, "Write logits as CSV");
    infer->add_option("--trace-out", fa.trace_out, "Write the routing trace as CSV");

    TrainArgs ta;
    auto* train = app.add_subcommand("train-routers", "Train router (and embedding) parameters");
    train->add_option("--ckpt", ta.ckpt, "Composed checkpoint with routers");
    train->add_option("--data", ta.data, "JSONL corpus");
    train->add_flag("--synthetic", ta.synthetic, "Use the built-in two-population task");
    train->add_option("--out", ta.out, "Output checkpoint")->required();
    train->add_option("--loss-csv", ta.loss_csv, "Write the loss curve");
    train->add_option("--epochs", ta.cfg.epochs, "Epochs");
    train->add_option("--batch-size", ta.cfg.batch_size, "Examples per micro-batch");
    train->add_option("--grad-accum", ta.cfg.grad_accum_steps, "Micro-batches per step");
    train->add_option("--lr", ta.cfg.learning_rate, "Learning rate (constant)");
    train->add_option("--trainable", ta.trainable, "router or router+embed");
    train->add_option("--regime", ta.regime, "instruct or pretrain");
    train->add_option("--optimizer", ta.optimizer, "sgd or adam");

    StatsArgs st;
    auto* stats = app.add_subcommand("stats", "Routing heat map");
    stats->add_option("--ckpt", st.ckpt, "Composed checkpoint")->required();
    stats->add_option("--data", st.data, "JSONL corpus");
    stats->add_option("--tokens", st.tokens, "Comma-separated token ids");
    stats->add_option("--text", st.text, "Text for the byte tokenizer");
    stats->add_option("--site", st.site, "ffn, ffn.gate, ffn.up, ffn.down or attn");
    stats->add_option("--heatmap-out", st.heatmap_out, "Write the heat map CSV");
    stats->add_option("--dtype", st.dtype, "f32 or f64");

    EstimateArgs ea;
    auto* estimate = app.add_subcommand("estimate", "Cost model grid");
    estimate->add_option("--arch", ea.arch, "Architecture JSON or 'mistral7b'");
    estimate->add_option("--mode", ea.modes, "Comma-separated gating modes");
    estimate->add_option("--k", ea.k, "Top-K");
    estimate->add_option("--n", ea.ns, "Comma-separated expert counts");
    estimate->add_option("--granularity", ea.granularity, "ffn or fgmlp");
    estimate->add_flag("--mix-attention", ea.mix_attention, "Count routed attention blocks");
    estimate->add_option("--dtype", ea.dtype, "Storage dtype for memory");
    estimate->add_option("--budget", ea.budget, "Memory budget in GB");
    estimate->add_option("--out", ea.out, "Write the grid CSV");

    CheckGradArgs ga;
    auto* check = app.add_subcommand("check-grad", "Finite-difference gradient check");
    check->add_option("--ckpt", ga.ckpt, "Composed checkpoint with routers")->required();
    check->add_option("--data", ga.data, "JSONL corpus (default: random tokens)");
    check->add_option("--trainable", ga.trainable, "router or router+embed");
    check->add_option("--subset", ga.subset, "Entries to check");
    check->add_option("--eps", ga.eps, "Central difference step");
    check->add_option("--length", ga.length, "Random sequence length");
    check->add_option("--count", ga.count, "Random sequences");
    check->add_flag("--canary", ga.canary, "Corrupt the analytic gradient by +0.1");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUser;
    }

    Context ctx{out, err, json_out, std::nullopt};
    if (seed_opt->count() > 0) ctx.seed = seed;
    try {
        apply_threads(threads);
        if (compose->parsed()) run_compose(ctx, ca);
        else if (swap->parsed()) run_swap(ctx, sa);
        else if (inspect->parsed()) run_inspect(ctx, ia);
        else if (infer->parsed()) run_infer(ctx, fa);
        else if (train->parsed()) run_train(ctx, ta);
        else if (stats->parsed()) run_stats(ctx, st);
        else if (estimate->parsed()) run_estimate(ctx, ea);
        else if (check->parsed()) run_check_grad(ctx, ga);
        return kExitOk;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUser;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

}  // namespace moeforge::cli
