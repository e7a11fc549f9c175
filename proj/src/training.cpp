// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <ostream>

#include "moeforge/error.hpp"
#include "moeforge/kernels.hpp"
#include "moeforge/naming.hpp"
#include "moeforge/recipe.hpp"
#include "moeforge/rng.hpp"

namespace moeforge {

namespace k = kernels;

std::string_view to_string(Trainable t) { return t == Trainable::Router ? "router" : "router+embed"; }
std::string_view to_string(Regime r) { return r == Regime::Instruct ? "instruct" : "pretrain"; }
std::string_view to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

Trainable parse_trainable(std::string_view s) {
    if (s == "router") return Trainable::Router;
    if (s == "router+embed" || s == "router_plus_embed") return Trainable::RouterPlusEmbed;
    throw Error("unknown trainable set: " + std::string(s));
}

Regime parse_regime(std::string_view s) {
    if (s == "instruct") return Regime::Instruct;
    if (s == "pretrain") return Regime::Pretrain;
    throw Error("unknown training regime: " + std::string(s));
}

Optimizer parse_optimizer(std::string_view s) {
    if (s == "sgd") return Optimizer::Sgd;
    if (s == "adam") return Optimizer::Adam;
    throw Error("unknown optimizer: " + std::string(s));
}

void TrainConfig::validate() const {
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (grad_accum_steps < 1) throw Error("grad_accum_steps must be >= 1");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw Error("learning_rate must be >= 0");
}

Example Example::from_sequence(const std::vector<int>& tokens, std::size_t prompt_len, Regime regime) {
    if (tokens.size() < 2) throw Error("a training sequence needs at least two tokens");
    Example ex;
    ex.inputs.assign(tokens.begin(), tokens.end() - 1);
    ex.targets.assign(tokens.begin() + 1, tokens.end());
    for (std::size_t t = 0; t < ex.inputs.size(); ++t)
        ex.mask.push_back(regime == Regime::Pretrain || t + 1 >= prompt_len ? 1 : 0);
    return ex;
}

std::size_t Example::active() const {
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

std::size_t Batch::active() const {
    std::size_t n = 0;
    for (const auto& e : examples) n += e.active();
    return n;
}

template <typename T>
double lm_loss(const Matrix<T>& logits, const std::vector<int>& targets, const std::vector<std::uint8_t>& mask) {
    if (static_cast<int>(targets.size()) != logits.rows || mask.size() != targets.size())
        throw Error("lm_loss: logits, targets and mask disagree in length");
    double sum = 0.0;
    std::size_t count = 0;
    for (int t = 0; t < logits.rows; ++t) {
        if (!mask[t]) continue;
        if (targets[t] < 0 || targets[t] >= logits.cols) throw Error("target id out of range");
        const auto row = logits.row(t);
        double mx = -INFINITY;
        for (T v : row) mx = std::max(mx, static_cast<double>(v));
        double z = 0.0;
        for (T v : row) z += std::exp(static_cast<double>(v) - mx);
        sum += mx + std::log(z) - static_cast<double>(row[targets[t]]);
        ++count;
    }
    if (count == 0) throw Error("lm_loss: every position is masked");
    return sum / static_cast<double>(count);
}

template double lm_loss<float>(const Matrix<float>&, const std::vector<int>&, const std::vector<std::uint8_t>&);
template double lm_loss<double>(const Matrix<double>&, const std::vector<int>&, const std::vector<std::uint8_t>&);

// ---------------------------------------------------------------------------

namespace {

std::string ffn_router_name(const Model<double>& m, int layer, int index) {
    if (m.recipe.granularity == Granularity::Ffn) return names::ffn_router(layer);
    return names::ffn_router(layer, kFfnProjs[index]);
}

void require_routed(const Model<double>& m) {
    if (!m.recipe.routed()) throw Error("gate-less model has no router parameters to train");
}

GradMap zero_grads(const Model<double>& m, Trainable trainable) {
    GradMap g;
    for (const auto& name : trainable_names(m, trainable)) {
        const auto& p = parameter(m, name);
        g.emplace(name, Matrix<double>(p.rows, p.cols));
    }
    return g;
}

void add_scaled(std::span<double> y, double a, std::span<const double> x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) { return k::dot<double>(a, b); }

void rmsnorm_backward(std::span<const double> x, std::span<const double> w, double eps, std::span<const double> dy,
                      std::span<double> dx) {
    const double n = static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / n + eps);
    double gx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) gx += dy[i] * w[i] * x[i];
    const double c = inv * inv * inv * gx / n;
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += inv * dy[i] * w[i] - c * x[i];
}

// Softmax-over-selected backward: dz_j = w_j (dw_j - sum_k w_k dw_k).
void gate_backward(const GateDecision& d, const std::vector<double>& dw, const Matrix<double>& router,
                   std::span<const double> x, Matrix<double>* d_router, std::span<double> dx) {
    // dz_j = w_j * sum_m w_m (dw_j - dw_m); zero exactly when every dw agrees
    for (std::size_t j = 0; j < dw.size(); ++j) {
        double centered = 0.0;
        for (std::size_t m = 0; m < dw.size(); ++m) centered += d.weights[m] * (dw[j] - dw[m]);
        const double dz = d.weights[j] * centered;
        const int i = d.indices[j];
        if (d_router) add_scaled(d_router->row(i), dz, x);
        add_scaled(dx, dz, router.row(i));
    }
}

class Reverse {
public:
    Reverse(const Model<double>& m, Trainable trainable, GradMap& grads)
        : m_(m), embed_(trainable == Trainable::RouterPlusEmbed), g_(grads) {}

    // Returns the summed loss over active positions and adds d(loss sum) into grads.
    double run(const Example& ex, std::size_t& tokens) {
        const auto& a = m_.arch;
        const int s = static_cast<int>(ex.inputs.size());
        const int h = a.hidden_size;
        const int v = a.vocab_size;
        if (ex.targets.size() != ex.inputs.size() || ex.mask.size() != ex.inputs.size())
            throw Error("example inputs, targets and mask disagree in length");

        ForwardTape<double> tape;
        const auto res = model_forward(m_, ex.inputs, nullptr, &tape);

        double loss = 0.0;
        std::vector<double> dlogits(static_cast<std::size_t>(s) * v, 0.0);
        for (int t = 0; t < s; ++t) {
            if (!ex.mask[t]) continue;
            const int target = ex.targets[t];
            if (target < 0 || target >= v) throw Error("target id out of range");
            const auto row = res.logits.row(t);
            const double mx = *std::max_element(row.begin(), row.end());
            double z = 0.0;
            for (double x : row) z += std::exp(x - mx);
            const double lse = mx + std::log(z);
            loss += lse - row[target];
            double* dl = dlogits.data() + static_cast<std::size_t>(t) * v;
            for (int i = 0; i < v; ++i) dl[i] = std::exp(row[i] - lse);
            dl[target] -= 1.0;
            ++tokens;
        }

        std::vector<double> dres(static_cast<std::size_t>(s) * h, 0.0);
        {
            std::vector<double> dxn(h);
            for (int t = 0; t < s; ++t) {
                std::fill(dxn.begin(), dxn.end(), 0.0);
                k::matvec_t_acc<double>(m_.lm_head.span(), v, h, span(dlogits, t, v), dxn);
                rmsnorm_backward(span(tape.x_final, t, h), m_.final_norm, a.norm_eps, dxn, mspan(dres, t, h));
            }
        }

        for (int l = a.num_layers - 1; l >= 0; --l) {
            const bool need_input = l > 0 || embed_;
            layer_backward(l, tape.layers[l], s, dres, need_input);
            if (!need_input) break;
        }

        if (embed_) {
            auto& ge = g_.find(names::kEmbed)->second;
            for (int t = 0; t < s; ++t) add_scaled(ge.row(ex.inputs[t]), 1.0, span(dres, t, h));
        }
        return loss;
    }

private:
    static std::span<const double> span(const std::vector<double>& v, int t, int width) {
        return {v.data() + static_cast<std::size_t>(t) * width, static_cast<std::size_t>(width)};
    }
    static std::span<double> mspan(std::vector<double>& v, int t, int width) {
        return {v.data() + static_cast<std::size_t>(t) * width, static_cast<std::size_t>(width)};
    }

    Matrix<double>* grad_of(const std::string& name) {
        auto it = g_.find(name);
        return it == g_.end() ? nullptr : &it->second;
    }

    // On entry dres holds d loss / d(layer output); on exit d loss / d(layer input)
    // when need_input is set.
    void layer_backward(int l, const LayerTape<double>& lt, int s, std::vector<double>& dres, bool need_input) {
        const auto& a = m_.arch;
        const auto& layer = m_.layers[l];
        const int h = a.hidden_size;
        const double eps = a.norm_eps;
        const bool fine = m_.recipe.granularity == Granularity::Fgmlp;

        std::vector<double> dxf(static_cast<std::size_t>(s) * h, 0.0);
        for (int t = 0; t < s; ++t) {
            if (fine) {
                fgmlp_backward(l, layer, lt.ffn[t], span(lt.xf, t, h), span(dres, t, h), mspan(dxf, t, h));
            } else {
                ffn_backward(l, layer, lt.ffn[t], span(lt.xf, t, h), span(dres, t, h), mspan(dxf, t, h));
            }
        }
        std::vector<double>& dh = dres;  // d h_mid: residual path plus the FFN norm path
        for (int t = 0; t < s; ++t) rmsnorm_backward(span(lt.h_mid, t, h), layer.ffn_norm, eps, span(dxf, t, h), mspan(dh, t, h));

        const bool mixed = m_.recipe.mix_attention;
        const int nblocks = static_cast<int>(layer.attention.size());
        std::vector<double> dxa(static_cast<std::size_t>(s) * h, 0.0);
        std::vector<std::vector<double>> dout(nblocks);
        if (mixed) {
            Matrix<double>* grouter = layer.attn_router ? grad_of(names::attn_router(l)) : nullptr;
            for (int t = 0; t < s; ++t) {
                const auto& d = lt.attn_decisions[t];
                std::vector<double> dw(d.indices.size());
                for (std::size_t j = 0; j < d.indices.size(); ++j) {
                    const int b = d.indices[j];
                    if (dout[b].empty()) dout[b].assign(static_cast<std::size_t>(s) * h, 0.0);
                    dw[j] = dot(span(dh, t, h), span(lt.blocks[b].out, t, h));
                    add_scaled(mspan(dout[b], t, h), d.weights[j], span(dh, t, h));
                }
                if (layer.attn_router) gate_backward(d, dw, *layer.attn_router, span(lt.xa, t, h), grouter, mspan(dxa, t, h));
            }
        } else {
            dout[0] = dh;
        }
        if (!need_input) return;

        for (int b = 0; b < nblocks; ++b)
            if (lt.blocks[b].used && !dout[b].empty()) attention_backward(layer.attention[b], lt.blocks[b], s, dout[b], dxa);
        std::vector<double> dxin = dh;
        for (int t = 0; t < s; ++t) rmsnorm_backward(span(lt.x_in, t, h), layer.attn_norm, eps, span(dxa, t, h), mspan(dxin, t, h));
        dres = std::move(dxin);
    }

    void attention_backward(const AttentionWeights<double>& w, const AttentionBlockTape<double>& bt, int s,
                            const std::vector<double>& dout, std::vector<double>& dxa) {
        const auto& a = m_.arch;
        const int h = a.hidden_size, kvd = a.kv_dim(), hd = a.head_dim();
        const int heads = a.num_heads, group = a.num_heads / a.num_kv_heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

        std::vector<double> dctx(static_cast<std::size_t>(s) * h, 0.0);
        for (int t = 0; t < s; ++t) k::matvec_t_acc<double>(w.o.span(), h, h, span(dout, t, h), mspan(dctx, t, h));

        std::vector<double> dq(static_cast<std::size_t>(s) * h, 0.0);
        std::vector<double> dk(static_cast<std::size_t>(s) * kvd, 0.0);
        std::vector<double> dv(static_cast<std::size_t>(s) * kvd, 0.0);
        std::vector<double> dp(s);
        for (int hh = 0; hh < heads; ++hh) {
            const int g = hh / group;
            for (int t = 0; t < s; ++t) {
                const double* prow = bt.probs.data() + (static_cast<std::size_t>(hh) * s + t) * s;
                const double* dc = dctx.data() + static_cast<std::size_t>(t) * h + hh * hd;
                const double* qt = bt.q.data() + static_cast<std::size_t>(t) * h + hh * hd;
                double* dqt = dq.data() + static_cast<std::size_t>(t) * h + hh * hd;
                double sum = 0.0;
                for (int j = 0; j <= t; ++j) {
                    const double* vj = bt.v.data() + static_cast<std::size_t>(j) * kvd + g * hd;
                    double* dvj = dv.data() + static_cast<std::size_t>(j) * kvd + g * hd;
                    double acc = 0.0;
                    for (int d = 0; d < hd; ++d) {
                        acc += dc[d] * vj[d];
                        dvj[d] += prow[j] * dc[d];
                    }
                    dp[j] = acc;
                    sum += prow[j] * acc;
                }
                for (int j = 0; j <= t; ++j) {
                    const double ds = prow[j] * (dp[j] - sum) * scale;
                    const double* kj = bt.k.data() + static_cast<std::size_t>(j) * kvd + g * hd;
                    double* dkj = dk.data() + static_cast<std::size_t>(j) * kvd + g * hd;
                    for (int d = 0; d < hd; ++d) {
                        dqt[d] += ds * kj[d];
                        dkj[d] += ds * qt[d];
                    }
                }
            }
        }
        k::serial::rope<double>(dq, s, heads, hd, a.rope_theta, true);
        k::serial::rope<double>(dk, s, a.num_kv_heads, hd, a.rope_theta, true);
        for (int t = 0; t < s; ++t) {
            auto dx = mspan(dxa, t, h);
            k::matvec_t_acc<double>(w.q.span(), h, h, span(dq, t, h), dx);
            k::matvec_t_acc<double>(w.k.span(), kvd, h, span(dk, t, kvd), dx);
            k::matvec_t_acc<double>(w.v.span(), kvd, h, span(dv, t, kvd), dx);
        }
    }

    void ffn_backward(int l, const Layer<double>& layer, const FfnTokenTape<double>& tape, std::span<const double> x,
                      std::span<const double> dy, std::span<double> dx) {
        const auto& d = tape.decisions[0];
        std::vector<double> dw(d.indices.size());
        std::vector<double> wdy(dy.size());
        for (std::size_t j = 0; j < d.indices.size(); ++j) {
            const auto& e = layer.experts[d.indices[j]];
            const double w = d.weights[j];
            dw[j] = dot(dy, tape.expert_out[j]);
            for (std::size_t i = 0; i < dy.size(); ++i) wdy[i] = w * dy[i];
            const auto& g = tape.gate_pre[j];
            const auto& u = tape.up_out[j];
            std::vector<double> dact(g.size(), 0.0);
            e.down.apply_transpose_acc(wdy, dact);
            std::vector<double> dg(g.size()), du(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                dg[i] = dact[i] * u[i] * k::silu_grad(g[i]);
                du[i] = dact[i] * k::silu(g[i]);
            }
            e.gate.apply_transpose_acc(dg, dx);
            e.up.apply_transpose_acc(du, dx);
        }
        if (!layer.ffn_routers.empty())
            gate_backward(d, dw, layer.ffn_routers[0], x, grad_of(ffn_router_name(m_, l, 0)), dx);
    }

    void fgmlp_backward(int l, const Layer<double>& layer, const FfnTokenTape<double>& tape,
                        std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
        const auto& dgd = tape.decisions[0];
        const auto& dud = tape.decisions[1];
        const auto& ddd = tape.decisions[2];
        const std::size_t inter = tape.act.size();
        std::vector<double> dact(inter, 0.0), tmp(std::max(inter, dy.size()));

        std::vector<double> dwd(ddd.indices.size());
        for (std::size_t j = 0; j < ddd.indices.size(); ++j) {
            dwd[j] = dot(dy, tape.fg_down[j]);
            std::span<double> wdy(tmp.data(), dy.size());
            for (std::size_t i = 0; i < dy.size(); ++i) wdy[i] = ddd.weights[j] * dy[i];
            layer.experts[ddd.indices[j]].down.apply_transpose_acc(wdy, dact);
        }
        std::vector<double> dg(inter), du(inter);
        for (std::size_t i = 0; i < inter; ++i) {
            dg[i] = dact[i] * tape.mixed_up[i] * k::silu_grad(tape.mixed_gate[i]);
            du[i] = dact[i] * k::silu(tape.mixed_gate[i]);
        }
        auto mix_back = [&](const GateDecision& d, const std::vector<std::vector<double>>& outs,
                            const std::vector<double>& dmix, int proj) {
            std::vector<double> dw(d.indices.size());
            std::span<double> wd(tmp.data(), inter);
            for (std::size_t j = 0; j < d.indices.size(); ++j) {
                dw[j] = dot(dmix, outs[j]);
                for (std::size_t i = 0; i < inter; ++i) wd[i] = d.weights[j] * dmix[i];
                layer.experts[d.indices[j]].proj(proj).apply_transpose_acc(wd, dx);
            }
            return dw;
        };
        const auto dwg = mix_back(dgd, tape.fg_gate, dg, 0);
        const auto dwu = mix_back(dud, tape.fg_up, du, 1);
        if (!layer.ffn_routers.empty()) {
            gate_backward(dgd, dwg, layer.ffn_routers[0], x, grad_of(ffn_router_name(m_, l, 0)), dx);
            gate_backward(dud, dwu, layer.ffn_routers[1], x, grad_of(ffn_router_name(m_, l, 1)), dx);
            gate_backward(ddd, dwd, layer.ffn_routers[2], x, grad_of(ffn_router_name(m_, l, 2)), dx);
        }
    }

    const Model<double>& m_;
    bool embed_;
    GradMap& g_;
};

// Loss plus the sorted selected-expert set of every routing decision.
struct Evaluation {
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    std::vector<std::vector<int>> selections;
};

Evaluation evaluate(const Model<double>& model, const Batch& batch) {
    Evaluation ev;
    for (const auto& ex : batch.examples) {
        const auto res = model_forward(model, ex.inputs);
        const std::size_t active = ex.active();
        if (active > 0) {
            ev.loss_sum += lm_loss(res.logits, ex.targets, ex.mask) * static_cast<double>(active);
            ev.tokens += active;
        }
        for (const auto& r : res.trace.records) {
            auto idx = r.decision.indices;
            std::sort(idx.begin(), idx.end());
            ev.selections.push_back(std::move(idx));
        }
    }
    return ev;
}

}  // namespace

std::vector<std::string> trainable_names(const Model<double>& model, Trainable trainable) {
    std::vector<std::string> out;
    for (int l = 0; l < static_cast<int>(model.layers.size()); ++l) {
        const auto& layer = model.layers[l];
        for (int i = 0; i < static_cast<int>(layer.ffn_routers.size()); ++i) out.push_back(ffn_router_name(model, l, i));
        if (layer.attn_router) out.push_back(names::attn_router(l));
    }
    if (trainable == Trainable::RouterPlusEmbed) out.emplace_back(names::kEmbed);
    std::sort(out.begin(), out.end());
    return out;
}

const Matrix<double>& parameter(const Model<double>& model, std::string_view name) {
    if (name == names::kEmbed) return model.embed;
    if (const auto l = names::layer_of(name); l && *l < static_cast<int>(model.layers.size())) {
        const auto& layer = model.layers[*l];
        if (name == names::attn_router(*l) && layer.attn_router) return *layer.attn_router;
        for (int i = 0; i < static_cast<int>(layer.ffn_routers.size()); ++i)
            if (name == ffn_router_name(model, *l, i)) return layer.ffn_routers[i];
    }
    throw Error("not a trainable parameter: " + std::string(name));
}

Matrix<double>& parameter(Model<double>& model, std::string_view name) {
    return const_cast<Matrix<double>&>(parameter(static_cast<const Model<double>&>(model), name));
}

LossGrad loss_and_grad(const Model<double>& model, const std::vector<Example>& examples, Trainable trainable) {
    require_routed(model);
    const int n = static_cast<int>(examples.size());
    std::vector<GradMap> grads(n);
    std::vector<double> losses(n, 0.0);
    std::vector<std::size_t> tokens(n, 0);
    std::vector<std::exception_ptr> failures(n);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        try {
            grads[i] = zero_grads(model, trainable);
            Reverse rev(model, trainable, grads[i]);
            losses[i] = rev.run(examples[i], tokens[i]);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    }
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);

    LossGrad out;
    out.grad_sum = zero_grads(model, trainable);
    for (int i = 0; i < n; ++i) {
        out.loss_sum += losses[i];
        out.tokens += tokens[i];
        for (auto& [name, g] : out.grad_sum) {
            const auto& src = grads[i].at(name).data;
            for (std::size_t j = 0; j < src.size(); ++j) g.data[j] += src[j];
        }
    }
    return out;
}

double batch_loss(const Model<double>& model, const Batch& batch) {
    const Evaluation ev = evaluate(model, batch);
    if (ev.tokens == 0) throw Error("batch has no active positions");
    return ev.loss_sum / static_cast<double>(ev.tokens);
}

GradMap grad(const Model<double>& model, const Batch& batch, Trainable trainable) {
    LossGrad lg = loss_and_grad(model, batch.examples, trainable);
    if (lg.tokens == 0) throw Error("batch has no active positions");
    const double inv = 1.0 / static_cast<double>(lg.tokens);
    for (auto& [name, g] : lg.grad_sum)
        for (double& v : g.data) v *= inv;
    return std::move(lg.grad_sum);
}

FiniteDiffReport finite_diff_check(const Model<double>& model, const Batch& batch, const FiniteDiffConfig& cfg) {
    Model<double> work = model;
    GradMap analytic = grad(work, batch, cfg.trainable);
    if (cfg.corrupt) cfg.corrupt(analytic);
    const Evaluation base = evaluate(work, batch);

    std::vector<std::pair<std::string, std::size_t>> entries;
    for (const auto& [name, g] : analytic)
        for (std::size_t j = 0; j < g.data.size(); ++j) entries.emplace_back(name, j);
    SplitMix64 rng(cfg.seed);
    for (std::size_t i = entries.size(); i > 1; --i) std::swap(entries[i - 1], entries[rng.below(i)]);

    FiniteDiffReport report;
    for (const auto& [name, j] : entries) {
        if (report.checked >= cfg.subset) break;
        double& theta = parameter(work, name).data[j];
        const double saved = theta;
        theta = saved + cfg.eps;
        const Evaluation plus = evaluate(work, batch);
        theta = saved - cfg.eps;
        const Evaluation minus = evaluate(work, batch);
        theta = saved;
        if (plus.selections != base.selections || minus.selections != base.selections) {
            ++report.skipped;
            continue;
        }
        const double numeric = (plus.loss_sum / static_cast<double>(plus.tokens) -
                                minus.loss_sum / static_cast<double>(minus.tokens)) /
                               (2.0 * cfg.eps);
        const double a = analytic.at(name).data[j];
        const bool both_zero = std::abs(a) <= cfg.abs_floor && std::abs(numeric) <= cfg.abs_floor;
        const double rel =
            both_zero ? 0.0 : std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), cfg.abs_floor});
        ++report.checked;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_entry = name + "[" + std::to_string(j) + "]";
        }
    }
    return report;
}

void store_parameters(const Model<double>& model, const std::vector<std::string>& names, TensorMap& ckpt) {
    for (const auto& name : names) {
        const Tensor& t = ckpt.at(name);
        const auto& p = parameter(model, name);
        ckpt.set(name, Tensor::from_values(t.dtype(), t.shape(), std::span<const double>(p.data)));
    }
}

TrainResult train_routers(const TensorMap& ckpt, const std::vector<Example>& corpus, const TrainConfig& cfg) {
    cfg.validate();
    if (corpus.empty()) throw Error("empty corpus");
    Model<double> model = Model<double>::from_checkpoint(ckpt);
    require_routed(model);
    const auto names = trainable_names(model, cfg.trainable);

    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> adam;
    SplitMix64 rng(cfg.seed);
    TrainResult result;
    std::uint64_t tokens_seen = 0;
    int step = 0;
    const std::size_t window = static_cast<std::size_t>(cfg.batch_size) * cfg.grad_accum_steps;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(corpus.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        for (std::size_t start = 0; start < order.size(); start += window) {
            std::vector<Example> examples;
            for (std::size_t i = start; i < std::min(order.size(), start + window); ++i)
                examples.push_back(corpus[order[i]]);
            LossGrad lg = loss_and_grad(model, examples, cfg.trainable);
            if (lg.tokens == 0) continue;
            const double inv = 1.0 / static_cast<double>(lg.tokens);
            const double lr = cfg.learning_rate;
            ++step;
            for (const auto& name : names) {
                auto& theta = parameter(model, name).data;
                const auto& g = lg.grad_sum.at(name).data;
                if (cfg.optimizer == Optimizer::Sgd) {
                    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= lr * (g[j] * inv);
                } else {
                    auto& [m, v] = adam[name];
                    if (m.empty()) {
                        m.assign(theta.size(), 0.0);
                        v.assign(theta.size(), 0.0);
                    }
                    const double c1 = 1.0 - std::pow(cfg.adam_beta1, step);
                    const double c2 = 1.0 - std::pow(cfg.adam_beta2, step);
                    for (std::size_t j = 0; j < theta.size(); ++j) {
                        const double gj = g[j] * inv;
                        m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * gj;
                        v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * gj * gj;
                        theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.adam_eps);
                    }
                }
            }
            tokens_seen += lg.tokens;
            result.curve.push_back({step, lg.loss_sum * inv, lr, tokens_seen});
        }
    }
    result.checkpoint = ckpt;
    store_parameters(model, names, result.checkpoint);
    return result;
}

void write_loss_csv(const std::vector<LossRecord>& curve, std::ostream& out) {
    out << "step,loss,lr,tokens_seen\n";
    for (const auto& r : curve)
        out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.lr) << ',' << r.tokens_seen << '\n';
}

}  // namespace moeforge
