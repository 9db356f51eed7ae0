// SPDX-License-Identifier: Apache-2.0
#include "saqt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

#include "saqt/errors.hpp"
#include "saqt/formats.hpp"
#include "saqt/rng.hpp"

namespace saqt {

void validate(const ModelConfig& cfg) {
    if (cfg.n_layers < 1)
        throw std::invalid_argument("ModelConfig: n_layers must be positive");
    if (cfg.d_model < 1 || cfg.n_heads < 1 || cfg.d_model % cfg.n_heads != 0)
        throw std::invalid_argument("ModelConfig: d_model must be a positive multiple of n_heads");
    if (cfg.head_dim() % 2 != 0)
        throw std::invalid_argument("ModelConfig: head_dim must be even for the rotary embedding");
    if (cfg.d_ff < 1)
        throw std::invalid_argument("ModelConfig: d_ff must be positive");
    if (cfg.vocab_size < 2)
        throw std::invalid_argument("ModelConfig: vocab_size must be at least 2");
    if (cfg.max_context < 1)
        throw std::invalid_argument("ModelConfig: max_context must be positive");
    if (!(cfg.rope_base > 0.0f) || !std::isfinite(cfg.rope_base))
        throw std::invalid_argument("ModelConfig: rope_base must be finite and positive");
    if (!(cfg.rms_eps >= 0.0f) || !std::isfinite(cfg.rms_eps))
        throw std::invalid_argument("ModelConfig: rms_eps must be finite and non-negative");
}

ModelConfig default_synth_config() {
    ModelConfig cfg;
    cfg.max_context = 128;
    return cfg;
}

const Tensor& ModelBundle::weight(int layer, SiteKind kind) const {
    if (layer < 1 || layer > static_cast<int>(layers.size()))
        throw std::invalid_argument("ModelBundle::weight: layer " + std::to_string(layer) +
                                    " out of range");
    const LayerWeights& lw = layers[layer - 1];
    switch (kind) {
        case SiteKind::q: return lw.wq;
        case SiteKind::k: return lw.wk;
        case SiteKind::v: return lw.wv;
        case SiteKind::out: return lw.wout;
        case SiteKind::gate: return lw.wgate;
        case SiteKind::up: return lw.wup;
        case SiteKind::down: return lw.wdown;
        default:
            throw std::invalid_argument("ModelBundle::weight: " + std::string(to_string(kind)) +
                                        " has no projection matrix");
    }
}

Tensor& ModelBundle::weight(int layer, SiteKind kind) {
    return const_cast<Tensor&>(static_cast<const ModelBundle*>(this)->weight(layer, kind));
}

void validate_shapes(const ModelBundle& model) {
    const ModelConfig& c = model.config;
    const auto d = static_cast<std::size_t>(c.d_model);
    const auto ff = static_cast<std::size_t>(c.d_ff);
    const auto v = static_cast<std::size_t>(c.vocab_size);
    auto expect = [](const Tensor& t, std::vector<std::size_t> shape, const char* name) {
        if (t.shape() != shape)
            throw DataError(std::string("model tensor ") + name + " has the wrong shape");
    };
    if (static_cast<int>(model.layers.size()) != c.n_layers)
        throw DataError("model has " + std::to_string(model.layers.size()) + " layers, config says " +
                        std::to_string(c.n_layers));
    expect(model.embedding, {v, d}, "embedding");
    expect(model.final_norm_gamma, {d}, "final_norm_gamma");
    expect(model.lm_head, {d, v}, "lm_head");
    for (const LayerWeights& lw : model.layers) {
        expect(lw.rmsnorm_in_gamma, {d}, "rmsnorm_in_gamma");
        expect(lw.rmsnorm_post_gamma, {d}, "rmsnorm_post_gamma");
        expect(lw.wq, {d, d}, "wq");
        expect(lw.wk, {d, d}, "wk");
        expect(lw.wv, {d, d}, "wv");
        expect(lw.wout, {d, d}, "wout");
        expect(lw.wgate, {d, ff}, "wgate");
        expect(lw.wup, {d, ff}, "wup");
        expect(lw.wdown, {ff, d}, "wdown");
    }
}

namespace {

std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

Tensor draw_uniform(Rng& rng, std::vector<std::size_t> shape, double bound) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<float>(rng.uniform_sym(bound));
    return t;
}

Tensor ones(std::size_t n) {
    Tensor t({n});
    std::fill(t.values().begin(), t.values().end(), 1.0f);
    return t;
}

}  // namespace

ModelBundle synth_model(const ModelConfig& cfg, const SpikeInjection& inject, std::uint64_t seed) {
    validate(cfg);
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto ff = static_cast<std::size_t>(cfg.d_ff);
    const auto v = static_cast<std::size_t>(cfg.vocab_size);
    const double proj_bound = std::sqrt(3.0 / cfg.d_model);
    const double down_bound = std::sqrt(3.0 / cfg.d_ff);

    Rng rng(seed);
    ModelBundle m;
    m.config = cfg;
    // Fixed draw order: embedding, per layer q,k,v,out,gate,up,down, lm head.
    // Gammas are ones and consume no randomness, so the base weights for a
    // seed are identical with and without injection.
    m.embedding = draw_uniform(rng, {v, d}, std::sqrt(3.0));
    m.layers.resize(cfg.n_layers);
    for (LayerWeights& lw : m.layers) {
        lw.rmsnorm_in_gamma = ones(d);
        lw.rmsnorm_post_gamma = ones(d);
        lw.wq = draw_uniform(rng, {d, d}, proj_bound);
        lw.wk = draw_uniform(rng, {d, d}, proj_bound);
        lw.wv = draw_uniform(rng, {d, d}, proj_bound);
        lw.wout = draw_uniform(rng, {d, d}, proj_bound);
        lw.wgate = draw_uniform(rng, {d, ff}, proj_bound);
        lw.wup = draw_uniform(rng, {d, ff}, proj_bound);
        lw.wdown = draw_uniform(rng, {ff, d}, down_bound);
    }
    m.final_norm_gamma = ones(d);
    m.lm_head = draw_uniform(rng, {d, v}, proj_bound);

    std::string id = "synth:seed=" + std::to_string(seed) + ":L" + std::to_string(cfg.n_layers) +
                     ":d" + std::to_string(cfg.d_model) + ":h" + std::to_string(cfg.n_heads) +
                     ":ff" + std::to_string(cfg.d_ff) + ":v" + std::to_string(cfg.vocab_size);

    for (const ChannelSpike& s : inject.channels) {
        if (!is_linear(s.kind))
            throw std::invalid_argument("spike injection: " + std::string(to_string(s.kind)) +
                                        " is not a projection");
        if (s.layer < 1 || s.layer > cfg.n_layers)
            throw std::invalid_argument("spike injection: layer " + std::to_string(s.layer) +
                                        " out of range");
        Tensor& w = m.weight(s.layer, s.kind);
        if (s.channel < 0 || static_cast<std::size_t>(s.channel) >= w.dim(1))
            throw std::invalid_argument("spike injection: channel " + std::to_string(s.channel) +
                                        " out of range for " + to_string(s.kind));
        if (!std::isfinite(s.scale))
            throw std::invalid_argument("spike injection: scale must be finite");
        for (std::size_t r = 0; r < w.dim(0); ++r)
            w(r, s.channel) *= s.scale;
        id += ":spike=" + std::string(to_string(s.kind)) + "@" + std::to_string(s.layer) + ".c" +
              std::to_string(s.channel) + "x" + fmt_g(s.scale);
    }
    if (inject.bot) {
        if (inject.bot_channel < 0 || inject.bot_channel >= cfg.d_model)
            throw std::invalid_argument("spike injection: bot_channel out of range");
        if (!std::isfinite(inject.bot_scale))
            throw std::invalid_argument("spike injection: bot_scale must be finite");
        m.embedding(0, inject.bot_channel) = inject.bot_scale;
        id += ":bot=c" + std::to_string(inject.bot_channel) + "x" + fmt_g(inject.bot_scale);
    }
    m.model_id = id;
    return m;
}

namespace {

Tensor reshaped(const Tensor& t, std::vector<std::size_t> shape) {
    return Tensor(std::move(shape), t.values());
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = a[i] + b[i];
    require_finite(out, "residual add");
    return out;
}

// Causal scaled-dot-product attention over roped q/k and flat v, all heads.
// Softmax runs over the valid prefix only, so later tokens cannot perturb
// earlier positions even at the last bit.
Tensor attention_mix(const Tensor& q3, const Tensor& k3, const Tensor& v, int n_heads,
                     int head_dim) {
    const std::size_t seq = q3.dim(0);
    const std::size_t hd = static_cast<std::size_t>(head_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Tensor ctx({seq, static_cast<std::size_t>(n_heads) * hd});
    std::vector<double> s(seq), w(seq);

    for (int h = 0; h < n_heads; ++h) {
        for (std::size_t i = 0; i < seq; ++i) {
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j <= i; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < hd; ++c)
                    dot += static_cast<double>(q3(i, h, c)) * k3(j, h, c);
                s[j] = dot * scale;
                if (s[j] > m)
                    m = s[j];
            }
            double denom = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                w[j] = std::exp(s[j] - m);
                denom += w[j];
            }
            for (std::size_t c = 0; c < hd; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j <= i; ++j)
                    acc += (w[j] / denom) * v(j, h * hd + c);
                ctx(i, h * hd + c) = static_cast<float>(acc);
            }
        }
    }
    require_finite(ctx, "attention output");
    return ctx;
}

struct PlanContext {
    const PrecisionPlan* plan = nullptr;
    const EvalOptions* opts = nullptr;
    const ModelBundle* model = nullptr;
};

Tensor treat_activations(const Tensor& x, const Treatment& t, const PlanContext& pc,
                         const QuantSite& site) {
    switch (t.kind) {
        case TreatmentKind::integer: {
            QuantSpec spec;
            spec.bits = t.bits;
            spec.granularity = pc.opts->granularity;
            if (pc.opts->use_static_scales) {
                auto it = pc.model->static_scales.find(site);
                if (it == pc.model->static_scales.end())
                    throw DataError("no calibrated scale for " + to_string(site) +
                                    "; calibrate before static evaluation");
                spec.static_scale = it->second;
            }
            if (pc.opts->exclude_token)
                return fake_quantize_excluding_token(x, spec, *pc.opts->exclude_token);
            return fake_quantize(x, spec);
        }
        case TreatmentKind::fp16:
            return fp16_round_tensor(x);
        case TreatmentKind::fp8_e5m2:
            return fp8_quantize_tensor(x, Fp8Format::e5m2());
        case TreatmentKind::fp8_e4m3:
            return fp8_quantize_tensor(x, Fp8Format::e4m3());
        case TreatmentKind::full:
            break;
    }
    return x;
}

Tensor treat_weights(const Tensor& w, const Treatment& t) {
    switch (t.kind) {
        case TreatmentKind::integer:
            return quantize_weights(w, t.bits);
        case TreatmentKind::fp16:
            return fp16_round_tensor(w);
        case TreatmentKind::fp8_e5m2:
            return fp8_quantize_tensor(w, Fp8Format::e5m2());
        case TreatmentKind::fp8_e4m3:
            return fp8_quantize_tensor(w, Fp8Format::e4m3());
        case TreatmentKind::full:
            break;
    }
    return w;
}

// One projection: tap input, apply the site treatment, matmul, tap output.
Tensor project(int layer, SiteKind kind, const Tensor& input, const PlanContext& pc,
               const TapFn& tap) {
    if (tap)
        tap(SiteId{layer, kind, Boundary::input}, input);

    Tensor out;
    const Tensor& w = pc.model->weight(layer, kind);
    if (pc.plan) {
        const Treatment t = pc.plan->treatment_for(layer, kind);
        if (t.kind == TreatmentKind::full) {
            out = matmul(input, w);
        } else {
            // high_applies gates the high-precision treatments only; integer
            // treatment always covers both sides (the W8A8 baseline).
            const bool on_acts = t.kind == TreatmentKind::integer ||
                                 pc.plan->high_applies != HighApplies::weights;
            const bool on_weights = t.kind == TreatmentKind::integer ||
                                    pc.plan->high_applies != HighApplies::activations;
            Tensor xq, wq;
            if (on_acts)
                xq = treat_activations(input, t, pc, QuantSite{layer, kind});
            if (on_weights)
                wq = treat_weights(w, t);
            out = matmul(on_acts ? xq : input, on_weights ? wq : w);
        }
    } else {
        out = matmul(input, w);
    }

    if (tap)
        tap(SiteId{layer, kind, Boundary::output}, out);
    return out;
}

}  // namespace

Tensor forward(const ModelBundle& model, const std::vector<int>& tokens,
               const PrecisionPlan* plan, const EvalOptions& opts, const TapFn& tap) {
    validate(model.config);
    validate_shapes(model);
    const ModelConfig& cfg = model.config;
    if (tokens.empty())
        throw std::invalid_argument("forward: empty token stream");
    if (static_cast<int>(tokens.size()) > cfg.max_context)
        throw DataError("forward: stream of " + std::to_string(tokens.size()) +
                        " tokens overflows the context window (" +
                        std::to_string(cfg.max_context) + ")");
    for (int id : tokens)
        if (id < 0 || id >= cfg.vocab_size)
            throw DataError("forward: token id " + std::to_string(id) + " outside vocabulary");
    if (opts.exclude_token && *opts.exclude_token >= tokens.size())
        throw std::invalid_argument("forward: excluded token position out of range");

    const std::size_t seq = tokens.size();
    const auto d = static_cast<std::size_t>(cfg.d_model);
    PlanContext pc{plan, &opts, &model};

    Tensor x({seq, d});
    for (std::size_t t = 0; t < seq; ++t) {
        const float* row = model.embedding.data() + static_cast<std::size_t>(tokens[t]) * d;
        std::copy(row, row + d, x.data() + t * d);
    }

    for (int layer = 1; layer <= cfg.n_layers; ++layer) {
        const LayerWeights& lw = model.layers[layer - 1];

        if (tap)
            tap(SiteId{layer, SiteKind::rmsnorm_in, Boundary::input}, x);
        Tensor h = rms_norm(x, lw.rmsnorm_in_gamma, cfg.rms_eps);
        if (tap)
            tap(SiteId{layer, SiteKind::rmsnorm_in, Boundary::output}, h);

        const Tensor q = project(layer, SiteKind::q, h, pc, tap);
        const Tensor k = project(layer, SiteKind::k, h, pc, tap);
        const Tensor v = project(layer, SiteKind::v, h, pc, tap);

        const auto heads = static_cast<std::size_t>(cfg.n_heads);
        const auto hd = static_cast<std::size_t>(cfg.head_dim());
        const Tensor q3 = rope_rotate(reshaped(q, {seq, heads, hd}), cfg.rope_base);
        const Tensor k3 = rope_rotate(reshaped(k, {seq, heads, hd}), cfg.rope_base);
        const Tensor ctx = attention_mix(q3, k3, v, cfg.n_heads, cfg.head_dim());

        const Tensor attn_out = project(layer, SiteKind::out, ctx, pc, tap);
        x = add(x, attn_out);

        if (tap)
            tap(SiteId{layer, SiteKind::rmsnorm_post, Boundary::input}, x);
        Tensor h2 = rms_norm(x, lw.rmsnorm_post_gamma, cfg.rms_eps);
        if (tap)
            tap(SiteId{layer, SiteKind::rmsnorm_post, Boundary::output}, h2);

        const Tensor g = project(layer, SiteKind::gate, h2, pc, tap);
        const Tensor u = project(layer, SiteKind::up, h2, pc, tap);
        Tensor act = silu(g);
        for (std::size_t i = 0; i < act.size(); ++i)
            act[i] *= u[i];
        require_finite(act, "gated mlp activation");

        const Tensor mlp_out = project(layer, SiteKind::down, act, pc, tap);
        x = add(x, mlp_out);
    }

    const Tensor xn = rms_norm(x, model.final_norm_gamma, cfg.rms_eps);
    return matmul(xn, model.lm_head);
}

double perplexity_from_logits(const Tensor& logits, const std::vector<int>& tokens) {
    if (logits.rank() != 2)
        throw std::invalid_argument("perplexity: logits must be [seq, vocab]");
    if (tokens.size() < 2)
        throw std::invalid_argument("perplexity: need at least two tokens");
    if (logits.dim(0) != tokens.size())
        throw std::invalid_argument("perplexity: logit rows must match the token count");
    require_finite(logits, "perplexity logits");
    const std::size_t vocab = logits.dim(1);

    double total = 0.0;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
        const int target = tokens[t];
        if (target < 0 || static_cast<std::size_t>(target) >= vocab)
            throw DataError("perplexity: token id " + std::to_string(target) +
                            " outside the logit vocabulary");
        const float* row = logits.data() + (t - 1) * vocab;
        double m = row[0];
        for (std::size_t j = 1; j < vocab; ++j)
            if (row[j] > m)
                m = row[j];
        double denom = 0.0;
        for (std::size_t j = 0; j < vocab; ++j)
            denom += std::exp(static_cast<double>(row[j]) - m);
        const double logp = static_cast<double>(row[target]) - m - std::log(denom);
        total -= logp;
    }
    const double ppl = std::exp(total / static_cast<double>(tokens.size() - 1));
    if (!std::isfinite(ppl))
        throw InvariantError("perplexity: result is non-finite");
    return ppl;
}

double perplexity(const ModelBundle& model, const std::vector<int>& tokens,
                  const PrecisionPlan* plan, const EvalOptions& opts) {
    return perplexity_from_logits(forward(model, tokens, plan, opts), tokens);
}

QuantErrorReport quant_error(const ModelBundle& model, const std::vector<int>& tokens,
                             const PrecisionPlan& plan, const EvalOptions& opts) {
    const Tensor full = forward(model, tokens);
    const Tensor planned = forward(model, tokens, &plan, opts);

    QuantErrorReport r;
    double se = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        const double d = static_cast<double>(planned[i]) - full[i];
        se += d * d;
        const double a = std::fabs(d);
        if (a > r.logit_max_abs_err)
            r.logit_max_abs_err = a;
    }
    r.logit_mse = se / static_cast<double>(full.size());
    r.ppl_full = perplexity_from_logits(full, tokens);
    r.ppl_plan = perplexity_from_logits(planned, tokens);
    r.ppl_delta = r.ppl_plan - r.ppl_full;
    return r;
}

}  // namespace saqt
