// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saqt/plan.hpp"
#include "saqt/quant.hpp"
#include "saqt/sites.hpp"
#include "saqt/tensor.hpp"

namespace saqt {

// Pre-norm decoder dimensions. Defaults aim at a desk-scale model; the
// context window default matches the usual evaluation window of the
// full-size architecture.
struct ModelConfig {
    int n_layers = 8;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 172;
    int vocab_size = 256;
    int max_context = 2048;
    float rope_base = 10000.0f;
    float rms_eps = 1e-5f;

    int head_dim() const { return d_model / n_heads; }
};

void validate(const ModelConfig& cfg);  // std::invalid_argument on bad fields

// The synthetic-model default: same shape, short 128-token context.
ModelConfig default_synth_config();

struct LayerWeights {
    Tensor rmsnorm_in_gamma;    // [d_model]
    Tensor wq, wk, wv, wout;    // [d_model, d_model], stored input-major
    Tensor rmsnorm_post_gamma;  // [d_model]
    Tensor wgate, wup;          // [d_model, d_ff]
    Tensor wdown;               // [d_ff, d_model]
};

struct ModelBundle {
    ModelConfig config;
    std::string model_id;
    Tensor embedding;         // [vocab_size, d_model]
    std::vector<LayerWeights> layers;
    Tensor final_norm_gamma;  // [d_model]
    Tensor lm_head;           // [d_model, vocab_size]
    std::map<QuantSite, double> static_scales;  // optional calibrated deltas

    const Tensor& weight(int layer, SiteKind kind) const;  // layer is 1-based
    Tensor& weight(int layer, SiteKind kind);
};

void validate_shapes(const ModelBundle& model);  // DataError on mismatch

// Multiplies the weights feeding one output channel of a projection, so the
// spike emerges from the matmul and propagates through the residual stream
// instead of being patched into activations.
struct ChannelSpike {
    int layer = 2;
    SiteKind kind = SiteKind::down;
    int channel = 0;
    float scale = 300.0f;
};

struct SpikeInjection {
    std::vector<ChannelSpike> channels;

    // Write a spike of magnitude bot_scale into one channel of the embedding
    // row for token id 0, the conventional stream opener. A plain scale-up of
    // the whole row would vanish at the first rmsnorm (row normalization is
    // scale invariant), so the spike is planted in a single channel where it
    // survives into every layer's residual input.
    bool bot = false;
    int bot_channel = 0;
    float bot_scale = 300.0f;

    bool empty() const { return channels.empty() && !bot; }
};

// Weights drawn i.i.d. uniform on [-sqrt(3/fan_in), +sqrt(3/fan_in)] (unit
// output variance), gammas at one, embedding rows unit variance. The draw
// order is fixed, so a given seed yields the same base weights with or
// without injection.
ModelBundle synth_model(const ModelConfig& cfg, const SpikeInjection& inject, std::uint64_t seed);

using TapFn = std::function<void(const SiteId&, const Tensor&)>;

// Evaluation-time switches that are not part of the plan itself.
struct EvalOptions {
    Granularity granularity = Granularity::per_tensor;
    std::optional<std::size_t> exclude_token;  // row skipped by activation quantization
    bool use_static_scales = false;            // take deltas from bundle.static_scales
};

// Full forward pass over the token stream: embed, n_layers pre-norm decoder
// blocks, final norm, LM head; returns [seq, vocab] logits. No KV cache:
// everything is recomputed per call. `plan` == nullptr runs full precision.
// Input-boundary taps fire before any treatment is applied, output taps after
// the projection's matmul.
Tensor forward(const ModelBundle& model, const std::vector<int>& tokens,
               const PrecisionPlan* plan = nullptr, const EvalOptions& opts = {},
               const TapFn& tap = {});

// exp(mean over t>=1 of -log softmax(logits[t-1])[tokens[t]]).
double perplexity_from_logits(const Tensor& logits, const std::vector<int>& tokens);
double perplexity(const ModelBundle& model, const std::vector<int>& tokens,
                  const PrecisionPlan* plan = nullptr, const EvalOptions& opts = {});

struct QuantErrorReport {
    double logit_mse = 0.0;
    double logit_max_abs_err = 0.0;
    double ppl_full = 0.0;
    double ppl_plan = 0.0;
    double ppl_delta = 0.0;  // ppl_plan - ppl_full
};

// Runs the model twice (full precision and planned) on the same stream.
QuantErrorReport quant_error(const ModelBundle& model, const std::vector<int>& tokens,
                             const PrecisionPlan& plan, const EvalOptions& opts = {});

}  // namespace saqt
