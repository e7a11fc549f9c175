// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moeforge/error.hpp"
#include "moeforge/kernels.hpp"
#include "moeforge/naming.hpp"

namespace moeforge {

namespace k = kernels;

std::string_view to_string(Site s) {
    switch (s) {
        case Site::Attn: return "attn";
        case Site::Ffn: return "ffn";
        case Site::FfnGate: return "ffn.gate";
        case Site::FfnUp: return "ffn.up";
        case Site::FfnDown: return "ffn.down";
    }
    return "?";
}

Site parse_site(std::string_view s) {
    if (s == "attn") return Site::Attn;
    if (s == "ffn") return Site::Ffn;
    if (s == "ffn.gate" || s == "gate") return Site::FfnGate;
    if (s == "ffn.up" || s == "up") return Site::FfnUp;
    if (s == "ffn.down" || s == "down") return Site::FfnDown;
    throw Error("unknown routing site: " + std::string(s));
}

int GateDecision::top_expert() const {
    int best = -1;
    double best_w = -1.0;
    for (std::size_t j = 0; j < indices.size(); ++j) {
        if (weights[j] > best_w || (weights[j] == best_w && indices[j] < best)) {
            best = indices[j];
            best_w = weights[j];
        }
    }
    return best;
}

void RoutingTrace::append(const RoutingTrace& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
}

template <typename T>
Matrix<T> Matrix<T>::from_tensor(const Tensor& t) {
    if (t.rank() != 2) throw Error("expected a 2-D tensor");
    Matrix<T> m;
    m.rows = static_cast<int>(t.dim(0));
    m.cols = static_cast<int>(t.dim(1));
    m.data = t.values<T>();
    return m;
}

template <typename T>
void Projection<T>::apply(std::span<const T> x, std::span<T> y) const {
    k::matvec<T>(weight->span(), weight->rows, weight->cols, x, y);
    if (!lora) return;
    const auto& f = *lora;
    std::vector<T> ax(f.a.rows);
    k::matvec<T>(f.a.span(), f.a.rows, f.a.cols, x, ax);
    std::vector<T> bax(f.b.rows);
    k::matvec<T>(f.b.span(), f.b.rows, f.b.cols, ax, bax);
    for (int i = 0; i < f.b.rows; ++i) y[i] += f.scale * bax[i];
}

template <typename T>
void Projection<T>::apply_transpose_acc(std::span<const T> dy, std::span<T> dx) const {
    k::matvec_t_acc<T>(weight->span(), weight->rows, weight->cols, dy, dx);
    if (!lora) return;
    const auto& f = *lora;
    std::vector<T> bt(f.b.cols, T(0));
    k::matvec_t_acc<T>(f.b.span(), f.b.rows, f.b.cols, dy, bt);
    for (auto& v : bt) v *= f.scale;
    k::matvec_t_acc<T>(f.a.span(), f.a.rows, f.a.cols, bt, dx);
}

// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> ffn_forward(const Matrix<T>& gate_w, const Matrix<T>& up_w, const Matrix<T>& down_w,
                           std::span<const T> x) {
    if (gate_w.cols != static_cast<int>(x.size()) || up_w.cols != static_cast<int>(x.size()) ||
        gate_w.rows != up_w.rows || down_w.cols != gate_w.rows)
        throw Error("ffn_forward: shape mismatch");
    std::vector<T> g(gate_w.rows), u(up_w.rows), y(down_w.rows);
    k::matvec<T>(gate_w.span(), gate_w.rows, gate_w.cols, x, g);
    k::matvec<T>(up_w.span(), up_w.rows, up_w.cols, x, u);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = k::silu(g[i]) * u[i];
    k::matvec<T>(down_w.span(), down_w.rows, down_w.cols, g, y);
    return y;
}

template <typename T>
std::vector<T> ffn_forward(const FfnWeights<T>& ffn, std::span<const T> x) {
    if (ffn.gate.in_dim() != static_cast<int>(x.size())) throw Error("ffn_forward: shape mismatch");
    std::vector<T> g(ffn.gate.out_dim()), u(ffn.up.out_dim()), y(ffn.down.out_dim());
    ffn.gate.apply(x, g);
    ffn.up.apply(x, u);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = k::silu(g[i]) * u[i];
    ffn.down.apply(g, y);
    return y;
}

template <typename T>
GateDecision gate(const Matrix<T>* router, int num_experts, std::span<const T> x, const GateConfig& cfg) {
    GateDecision d;
    if (router == nullptr) {
        const T w = T(1) / static_cast<T>(num_experts);
        for (int i = 0; i < num_experts; ++i) {
            d.indices.push_back(i);
            d.weights.push_back(static_cast<double>(w));
        }
        return d;
    }
    if (router->rows != num_experts || router->cols != static_cast<int>(x.size()))
        throw Error("router shape does not match (num_experts, hidden)");
    if (cfg.top_k < 1 || cfg.top_k > num_experts)
        throw Error("top_k (" + std::to_string(cfg.top_k) + ") exceeds number of experts (" +
                    std::to_string(num_experts) + ")");
    std::vector<T> logits(num_experts);
    for (int i = 0; i < num_experts; ++i) logits[i] = k::dot<T>(router->row(i), x);

    std::vector<int> order(num_experts);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return logits[a] > logits[b]; });
    if (cfg.always_on) d.indices.push_back(*cfg.always_on);
    for (int i : order) {
        if (static_cast<int>(d.indices.size()) >= cfg.top_k) break;
        if (cfg.always_on && i == *cfg.always_on) continue;
        d.indices.push_back(i);
    }
    T mx = -INFINITY;
    for (int i : d.indices) mx = std::max(mx, logits[i]);
    std::vector<T> e;
    T sum = T(0);
    for (int i : d.indices) {
        e.push_back(std::exp(logits[i] - mx));
        sum += e.back();
    }
    for (T v : e) d.weights.push_back(static_cast<double>(v / sum));
    return d;
}

namespace {

template <typename T>
const Matrix<T>* ffn_router(const Layer<T>& layer, const GateConfig& cfg, int index) {
    if (cfg.gateless) return nullptr;
    if (static_cast<int>(layer.ffn_routers.size()) <= index) throw Error("missing router for routed FFN site");
    return &layer.ffn_routers[index];
}

// One token through the routed FFN. When `tape` is non-null the intermediates
// needed for the backward pass are recorded; decisions are always recorded.
template <typename T>
void ffn_token(const Layer<T>& layer, const GateConfig& cfg, bool fine_grained, std::span<const T> x,
               std::span<T> y, FfnTokenTape<T>& tape, bool keep, EvalCounter* counter) {
    const int n = static_cast<int>(layer.experts.size());
    std::fill(y.begin(), y.end(), T(0));
    if (!fine_grained) {
        GateDecision d = gate(ffn_router(layer, cfg, 0), n, x, cfg);
        for (std::size_t j = 0; j < d.indices.size(); ++j) {
            const auto& ex = layer.experts[d.indices[j]];
            std::vector<T> g(ex.gate.out_dim()), u(ex.up.out_dim()), act(ex.gate.out_dim()), out(y.size());
            ex.gate.apply(x, g);
            ex.up.apply(x, u);
            for (std::size_t i = 0; i < g.size(); ++i) act[i] = k::silu(g[i]) * u[i];
            ex.down.apply(act, out);
            const T w = static_cast<T>(d.weights[j]);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += w * out[i];
            if (keep) {
                tape.gate_pre.push_back(std::move(g));
                tape.up_out.push_back(std::move(u));
                tape.expert_out.push_back(std::move(out));
            }
        }
        if (counter) {
            counter->expert_ffn.fetch_add(d.indices.size(), std::memory_order_relaxed);
            counter->projections.fetch_add(3 * d.indices.size(), std::memory_order_relaxed);
        }
        tape.decisions.push_back(std::move(d));
        return;
    }

    const GateDecision dg = gate(ffn_router(layer, cfg, 0), n, x, cfg);
    const GateDecision du = gate(ffn_router(layer, cfg, 1), n, x, cfg);
    const GateDecision dd = gate(ffn_router(layer, cfg, 2), n, x, cfg);
    const int inter = layer.experts.front().gate.out_dim();
    std::vector<T> g(inter, T(0)), u(inter, T(0)), act(inter);
    for (std::size_t j = 0; j < dg.indices.size(); ++j) {
        std::vector<T> p(inter);
        layer.experts[dg.indices[j]].gate.apply(x, p);
        const T w = static_cast<T>(dg.weights[j]);
        for (int i = 0; i < inter; ++i) g[i] += w * p[i];
        if (keep) tape.fg_gate.push_back(std::move(p));
    }
    for (std::size_t j = 0; j < du.indices.size(); ++j) {
        std::vector<T> p(inter);
        layer.experts[du.indices[j]].up.apply(x, p);
        const T w = static_cast<T>(du.weights[j]);
        for (int i = 0; i < inter; ++i) u[i] += w * p[i];
        if (keep) tape.fg_up.push_back(std::move(p));
    }
    for (int i = 0; i < inter; ++i) act[i] = k::silu(g[i]) * u[i];
    for (std::size_t j = 0; j < dd.indices.size(); ++j) {
        std::vector<T> p(y.size());
        layer.experts[dd.indices[j]].down.apply(act, p);
        const T w = static_cast<T>(dd.weights[j]);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += w * p[i];
        if (keep) tape.fg_down.push_back(std::move(p));
    }
    if (counter)
        counter->projections.fetch_add(dg.indices.size() + du.indices.size() + dd.indices.size(),
                                       std::memory_order_relaxed);
    if (keep) {
        tape.mixed_gate = std::move(g);
        tape.mixed_up = std::move(u);
        tape.act = std::move(act);
    }
    tape.decisions = {dg, du, dd};
}

}  // namespace

template <typename T>
std::pair<std::vector<T>, GateDecision> moe_ffn_forward(const Layer<T>& layer, std::span<const T> x,
                                                        const GateConfig& cfg, EvalCounter* counter) {
    std::vector<T> y(layer.experts.front().down.out_dim());
    FfnTokenTape<T> tape;
    ffn_token(layer, cfg, false, x, std::span<T>(y), tape, false, counter);
    return {std::move(y), std::move(tape.decisions.front())};
}

template <typename T>
std::pair<std::vector<T>, std::array<GateDecision, 3>> fgmlp_forward(const Layer<T>& layer, std::span<const T> x,
                                                                     const GateConfig& cfg, EvalCounter* counter) {
    if (!cfg.gateless && layer.ffn_routers.size() != 3) throw Error("missing per-projection router");
    std::vector<T> y(layer.experts.front().down.out_dim());
    FfnTokenTape<T> tape;
    ffn_token(layer, cfg, true, x, std::span<T>(y), tape, false, counter);
    return {std::move(y), {tape.decisions[0], tape.decisions[1], tape.decisions[2]}};
}

template <typename T>
std::vector<T> lora_expert_forward(const FfnWeights<T>& base, const LoraAdapter<T>& adapter, std::span<const T> x) {
    FfnWeights<T> merged = base;
    Projection<T>* projs[3] = {&merged.gate, &merged.up, &merged.down};
    for (int p = 0; p < 3; ++p) {
        const auto& f = adapter.factors[p];
        if (!f) continue;
        if (f->a.cols != projs[p]->in_dim() || f->b.rows != projs[p]->out_dim() || f->a.rows != f->b.cols ||
            f->a.rows < 1)
            throw Error("LoRA rank/shape mismatch on " + std::string(proj_name(static_cast<FfnProj>(p))) +
                        " projection");
        projs[p]->lora = f;
    }
    return ffn_forward(merged, x);
}

// ---------------------------------------------------------------------------

template <typename T>
GateConfig Model<T>::gate_config() const {
    GateConfig c;
    c.gateless = recipe.gating == Gating::Gateless;
    c.top_k = recipe.top_k;
    c.always_on = recipe.always_on;
    return c;
}

namespace {

template <typename T>
Matrix<T> load_matrix(const TensorMap& ckpt, const std::string& name, int rows, int cols) {
    const Tensor& t = ckpt.at(name);
    if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols)
        throw Error("tensor " + name + " has shape incompatible with the architecture");
    return Matrix<T>::from_tensor(t);
}

template <typename T>
std::vector<T> load_vector(const TensorMap& ckpt, const std::string& name, int n) {
    const Tensor& t = ckpt.at(name);
    if (t.rank() != 1 || t.dim(0) != n) throw Error("tensor " + name + " has wrong length");
    return t.values<T>();
}

}  // namespace

template <typename T>
Model<T> Model<T>::from_checkpoint(const TensorMap& ckpt) {
    Model<T> m;
    m.arch = infer_arch(ckpt);
    const auto& a = m.arch;
    m.is_moe = has_recipe_metadata(ckpt.metadata());
    if (m.is_moe) {
        m.recipe = read_recipe_metadata(ckpt.metadata());
        m.recipe.validate();
    } else {
        m.recipe.gating = Gating::Gateless;
        m.recipe.top_k = 1;
        m.recipe.experts = {ExpertSpec{ExpertKind::Full, "dense", std::nullopt, {}, {}}};
    }
    const int n = m.recipe.num_experts();
    const bool routed = m.recipe.routed();
    const int h = a.hidden_size, inter = a.ffn_intermediate_size, kv = a.kv_dim();

    m.embed = load_matrix<T>(ckpt, std::string(names::kEmbed), a.vocab_size, h);
    m.lm_head = load_matrix<T>(ckpt, std::string(names::kLmHead), a.vocab_size, h);
    m.final_norm = load_vector<T>(ckpt, std::string(names::kFinalNorm), h);

    auto dims = [&](FfnProj p) { return p == FfnProj::Down ? std::pair{h, inter} : std::pair{inter, h}; };

    for (int l = 0; l < a.num_layers; ++l) {
        Layer<T> layer;
        layer.attn_norm = load_vector<T>(ckpt, names::attn_norm(l), h);
        layer.ffn_norm = load_vector<T>(ckpt, names::ffn_norm(l), h);

        auto load_block = [&](auto name_of) {
            AttentionWeights<T> b;
            b.q = load_matrix<T>(ckpt, name_of(AttnProj::Q), h, h);
            b.k = load_matrix<T>(ckpt, name_of(AttnProj::K), kv, h);
            b.v = load_matrix<T>(ckpt, name_of(AttnProj::V), kv, h);
            b.o = load_matrix<T>(ckpt, name_of(AttnProj::O), h, h);
            return b;
        };
        if (m.recipe.mix_attention) {
            for (int i = 0; i < n; ++i)
                layer.attention.push_back(load_block([&](AttnProj p) { return names::attn_expert(l, i, p); }));
            if (routed) layer.attn_router = load_matrix<T>(ckpt, names::attn_router(l), n, h);
        } else {
            layer.attention.push_back(load_block([&](AttnProj p) { return names::attn(l, p); }));
        }

        std::array<std::shared_ptr<const Matrix<T>>, 3> base_ffn;
        auto base_proj = [&](FfnProj p) {
            auto& slot = base_ffn[static_cast<int>(p)];
            if (!slot) {
                auto [r, c] = dims(p);
                slot = std::make_shared<const Matrix<T>>(load_matrix<T>(ckpt, names::ffn(l, p), r, c));
            }
            return slot;
        };
        for (int i = 0; i < n; ++i) {
            const auto& spec = m.recipe.experts[i];
            FfnWeights<T> ex;
            Projection<T>* projs[3] = {&ex.gate, &ex.up, &ex.down};
            for (FfnProj p : kFfnProjs) {
                auto& proj = *projs[static_cast<int>(p)];
                auto [r, c] = dims(p);
                if (!m.is_moe) {
                    proj.weight = base_proj(p);
                } else if (spec.kind == ExpertKind::Full) {
                    proj.weight = std::make_shared<const Matrix<T>>(
                        load_matrix<T>(ckpt, names::ffn_expert(l, i, p), r, c));
                } else {
                    proj.weight = base_proj(p);
                    const auto a_name = names::ffn_lora_a(l, i, p);
                    const auto b_name = names::ffn_lora_b(l, i, p);
                    const bool has_a = ckpt.contains(a_name), has_b = ckpt.contains(b_name);
                    if (has_a != has_b) throw Error("LoRA factor pair incomplete for " + a_name);
                    if (!has_a) continue;
                    LoraFactor<T> f;
                    f.a = Matrix<T>::from_tensor(ckpt.at(a_name));
                    f.b = Matrix<T>::from_tensor(ckpt.at(b_name));
                    if (f.a.cols != c || f.b.rows != r || f.a.rows != f.b.cols || f.a.rows < 1)
                        throw Error("LoRA rank/shape mismatch for " + a_name);
                    f.scale = static_cast<T>(spec.lora_alpha.value() / f.a.rows);
                    proj.lora = std::move(f);
                }
            }
            layer.experts.push_back(std::move(ex));
        }

        if (routed) {
            if (m.recipe.granularity == Granularity::Ffn) {
                layer.ffn_routers.push_back(load_matrix<T>(ckpt, names::ffn_router(l), n, h));
            } else {
                for (FfnProj p : kFfnProjs) {
                    if (!ckpt.contains(names::ffn_router(l, p)))
                        throw Error("missing per-projection router: " + names::ffn_router(l, p));
                    layer.ffn_routers.push_back(load_matrix<T>(ckpt, names::ffn_router(l, p), n, h));
                }
            }
        }
        m.layers.push_back(std::move(layer));
    }
    return m;
}

// ---------------------------------------------------------------------------

template <typename T>
ForwardResult<T> model_forward(const Model<T>& model, std::span<const int> tokens, EvalCounter* counter,
                               ForwardTape<T>* tape) {
    const auto& a = model.arch;
    const int s = static_cast<int>(tokens.size());
    const int h = a.hidden_size;
    const int kvd = a.kv_dim();
    const T eps = static_cast<T>(a.norm_eps);
    if (s == 0) throw Error("empty token sequence");
    for (int t : tokens)
        if (t < 0 || t >= a.vocab_size)
            throw Error("token id out of range: " + std::to_string(t) + " (vocab " + std::to_string(a.vocab_size) + ")");

    const bool keep = tape != nullptr;
    const GateConfig cfg = model.gate_config();
    const bool mixed_attn = model.recipe.mix_attention;
    const bool fine = model.recipe.granularity == Granularity::Fgmlp;
    const std::size_t sh = static_cast<std::size_t>(s) * h;
    const k::AttentionShape shape{s, a.num_heads, a.num_kv_heads, a.head_dim()};

    std::vector<T> x(sh);
    for (int t = 0; t < s; ++t) std::copy_n(model.embed.row(tokens[t]).begin(), h, x.begin() + t * h);

    ForwardResult<T> result;
    if (tape) {
        tape->tokens.assign(tokens.begin(), tokens.end());
        tape->layers.clear();
    }

    for (int l = 0; l < a.num_layers; ++l) {
        const Layer<T>& layer = model.layers[l];
        LayerTape<T> lt;
        lt.xa.resize(sh);
        k::omp::rmsnorm<T>(x, layer.attn_norm, s, h, eps, lt.xa);

        const int nblocks = static_cast<int>(layer.attention.size());
        lt.blocks.resize(nblocks);
        if (mixed_attn) {
            lt.attn_decisions.resize(s);
            const Matrix<T>* router = cfg.gateless ? nullptr : &*layer.attn_router;
#pragma omp parallel for schedule(static)
            for (int t = 0; t < s; ++t)
                lt.attn_decisions[t] = gate(router, nblocks, std::span<const T>(lt.xa).subspan(t * h, h), cfg);
            for (const auto& d : lt.attn_decisions)
                for (int i : d.indices) lt.blocks[i].used = true;
        } else {
            lt.blocks[0].used = true;
        }
        for (int b = 0; b < nblocks; ++b) {
            auto& bt = lt.blocks[b];
            if (!bt.used) continue;
            const auto& w = layer.attention[b];
            bt.q.resize(sh);
            bt.k.resize(static_cast<std::size_t>(s) * kvd);
            bt.v.resize(static_cast<std::size_t>(s) * kvd);
            k::omp::linear<T>(lt.xa, w.q.span(), s, h, h, bt.q);
            k::omp::linear<T>(lt.xa, w.k.span(), s, h, kvd, bt.k);
            k::omp::linear<T>(lt.xa, w.v.span(), s, h, kvd, bt.v);
            k::omp::rope<T>(bt.q, s, a.num_heads, a.head_dim(), a.rope_theta);
            k::omp::rope<T>(bt.k, s, a.num_kv_heads, a.head_dim(), a.rope_theta);
            bt.ctx.resize(sh);
            if (keep) bt.probs.resize(static_cast<std::size_t>(a.num_heads) * s * s);
            k::omp::causal_attention<T>(bt.q, bt.k, bt.v, shape, bt.ctx, bt.probs);
            bt.out.resize(sh);
            k::omp::linear<T>(bt.ctx, w.o.span(), s, h, h, bt.out);
        }

        lt.h_mid = x;
        if (mixed_attn) {
            for (int t = 0; t < s; ++t) {
                const auto& d = lt.attn_decisions[t];
                for (std::size_t j = 0; j < d.indices.size(); ++j) {
                    const T w = static_cast<T>(d.weights[j]);
                    const T* o = lt.blocks[d.indices[j]].out.data() + t * h;
                    for (int i = 0; i < h; ++i) lt.h_mid[t * h + i] += w * o[i];
                }
            }
        } else {
            for (std::size_t i = 0; i < sh; ++i) lt.h_mid[i] += lt.blocks[0].out[i];
        }

        lt.xf.resize(sh);
        k::omp::rmsnorm<T>(lt.h_mid, layer.ffn_norm, s, h, eps, lt.xf);
        lt.ffn.resize(s);
        std::vector<T> ffn_out(sh);
#pragma omp parallel for schedule(static)
        for (int t = 0; t < s; ++t)
            ffn_token(layer, cfg, fine, std::span<const T>(lt.xf).subspan(t * h, h),
                      std::span<T>(ffn_out).subspan(t * h, h), lt.ffn[t], keep, counter);

        if (mixed_attn)
            for (int t = 0; t < s; ++t) {
                const auto& d = lt.attn_decisions[t];
                result.trace.records.push_back({l, Site::Attn, t, d.top_expert(), d});
            }
        for (int site = 0; site < (fine ? 3 : 1); ++site) {
            const Site kind = fine ? static_cast<Site>(static_cast<int>(Site::FfnGate) + site) : Site::Ffn;
            for (int t = 0; t < s; ++t) {
                const auto& d = lt.ffn[t].decisions[site];
                result.trace.records.push_back({l, kind, t, d.top_expert(), d});
            }
        }

        if (keep) lt.x_in = x;
        for (std::size_t i = 0; i < sh; ++i) x[i] = lt.h_mid[i] + ffn_out[i];
        if (keep) {
            tape->layers.push_back(std::move(lt));
        }
    }

    std::vector<T> xn(sh);
    k::omp::rmsnorm<T>(x, model.final_norm, s, h, eps, xn);
    result.logits = Matrix<T>(s, a.vocab_size);
    k::omp::linear<T>(xn, model.lm_head.span(), s, h, a.vocab_size, result.logits.data);
    if (tape) {
        tape->x_final = std::move(x);
        tape->xn = std::move(xn);
    }
    return result;
}

template <typename T>
PromptHiddenStats collect_prompt_hiddens(const Model<T>& model, const std::vector<std::vector<int>>& positive,
                                         const std::vector<std::vector<int>>& negative) {
    const int layers = model.arch.num_layers;
    const int h = model.arch.hidden_size;
    auto mean_over = [&](const std::vector<std::vector<int>>& prompts, std::vector<std::vector<double>>& ffn,
                         std::vector<std::vector<double>>& attn) {
        if (prompts.empty()) throw Error("empty prompt set");
        ffn.assign(layers, std::vector<double>(h, 0.0));
        attn.assign(layers, std::vector<double>(h, 0.0));
        std::size_t count = 0;
        for (const auto& p : prompts) {
            if (p.empty()) continue;
            ForwardTape<T> tape;
            model_forward(model, p, nullptr, &tape);
            for (int l = 0; l < layers; ++l)
                for (std::size_t t = 0; t < p.size(); ++t)
                    for (int i = 0; i < h; ++i) {
                        ffn[l][i] += static_cast<double>(tape.layers[l].h_mid[t * h + i]);
                        attn[l][i] += static_cast<double>(tape.layers[l].x_in[t * h + i]);
                    }
            count += p.size();
        }
        if (count == 0) throw Error("empty prompt set");
        for (int l = 0; l < layers; ++l)
            for (int i = 0; i < h; ++i) {
                ffn[l][i] /= static_cast<double>(count);
                attn[l][i] /= static_cast<double>(count);
            }
    };
    PromptHiddenStats stats;
    mean_over(positive, stats.ffn_positive, stats.attn_positive);
    mean_over(negative, stats.ffn_negative, stats.attn_negative);
    return stats;
}

std::vector<int> ByteTokenizer::encode(std::string_view text, bool add_bos) {
    std::vector<int> ids;
    ids.reserve(text.size() + 1);
    if (add_bos) ids.push_back(kBos);
    for (unsigned char c : text) ids.push_back(c);
    return ids;
}

std::string ByteTokenizer::decode(std::span<const int> ids) {
    std::string out;
    for (int id : ids)
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
    return out;
}

#define MOEFORGE_INSTANTIATE(T)                                                                                \
    template struct Matrix<T>;                                                                                 \
    template struct Projection<T>;                                                                             \
    template struct Model<T>;                                                                                  \
    template std::vector<T> ffn_forward<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,              \
                                           std::span<const T>);                                                \
    template std::vector<T> ffn_forward<T>(const FfnWeights<T>&, std::span<const T>);                         \
    template GateDecision gate<T>(const Matrix<T>*, int, std::span<const T>, const GateConfig&);               \
    template std::pair<std::vector<T>, GateDecision> moe_ffn_forward<T>(const Layer<T>&, std::span<const T>,  \
                                                                        const GateConfig&, EvalCounter*);      \
    template std::pair<std::vector<T>, std::array<GateDecision, 3>> fgmlp_forward<T>(                          \
        const Layer<T>&, std::span<const T>, const GateConfig&, EvalCounter*);                                 \
    template std::vector<T> lora_expert_forward<T>(const FfnWeights<T>&, const LoraAdapter<T>&,               \
                                                   std::span<const T>);                                        \
    template ForwardResult<T> model_forward<T>(const Model<T>&, std::span<const int>, EvalCounter*,           \
                                               ForwardTape<T>*);                                               \
    template PromptHiddenStats collect_prompt_hiddens<T>(const Model<T>&, const std::vector<std::vector<int>>&, \
                                                         const std::vector<std::vector<int>>&);

MOEFORGE_INSTANTIATE(float)
MOEFORGE_INSTANTIATE(double)
#undef MOEFORGE_INSTANTIATE

}  // namespace moeforge
