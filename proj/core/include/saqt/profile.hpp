// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saqt/model.hpp"
#include "saqt/sites.hpp"
#include "saqt/tensor.hpp"

namespace saqt {

// Summary of every value observed at one site over a stream. `std_dev` is the
// population standard deviation; `token_argmax` is the row (token position)
// holding the largest |value|.
struct SiteStats {
    SiteId site;
    double max_abs = 0.0;
    double mean = 0.0;
    double std_dev = 0.0;
    std::int64_t token_argmax = 0;
    std::int64_t count = 0;
};

// Online moment accumulator. Shards of a stream can be accumulated separately
// and merged; the merge combines counts, sums and maxima, so the result
// matches a single pass over the concatenated data (floating-point tolerance
// on mean/std, exact on max and count).
struct StatsAccumulator {
    double sum = 0.0;
    double sumsq = 0.0;
    double max_abs = 0.0;
    std::int64_t token_argmax = 0;
    std::int64_t count = 0;

    // `token_offset` maps local row indices to stream positions.
    void add(const Tensor& x, std::int64_t token_offset = 0);
    void merge(const StatsAccumulator& other);
    SiteStats finalize(const SiteId& site) const;
};

// Per-dimension |value| maxima of the residual stream (the rmsnorm_in
// inputs), reduced over tokens per layer and over layers per token.
struct DimensionStats {
    int n_layers = 0;
    int d_model = 0;
    int seq_len = 0;
    std::vector<float> layer_dim_max;  // [n_layers * d_model], max over tokens
    std::vector<float> token_dim_max;  // [seq_len * d_model], max over layers
};

struct SpikeReport {
    std::string model_id;
    std::string stream_id;
    int n_layers = 0;
    int d_model = 0;
    int seq_len = 0;
    double theta = 100.0;               // threshold behind threshold_sites
    std::vector<SiteStats> sites;       // layer-major, fixed kind/boundary order
    std::vector<SiteId> sigma_sites;    // sites with any |x - mean| > 6 std
    std::vector<int> llmint8_dims;      // dimensions matching the spread rule
    std::vector<SiteId> threshold_sites;  // sites with max_abs > theta
    DimensionStats dims;

    const SiteStats* find(const SiteId& id) const;  // nullptr when absent
};

// One full-precision tapped forward pass over the stream (len <= max_context).
SpikeReport collect_stats(const ModelBundle& model, const std::vector<int>& tokens,
                          const std::string& stream_id, double theta = 100.0);

// Flat indices of elements with |x - mean| > k * std (population std over the
// whole tensor). Needs at least 2 elements.
std::vector<std::size_t> detect_sigma(const Tensor& x, double k = 6.0);

// Dimensions whose |value| reaches `magnitude` in at least `layer_frac` of
// layers and at least `token_frac` of token positions.
std::vector<int> detect_llmint8(const DimensionStats& dims, double magnitude = 6.0,
                                double layer_frac = 0.25, double token_frac = 0.06);

// Sites whose max_abs exceeds theta, in report order.
std::vector<SiteId> detect_threshold(const SpikeReport& report, double theta = 100.0);

// "layer,input_max_abs,output_max_abs" rows for one site kind, layer 1..n.
std::string export_curves_csv(const SpikeReport& report, SiteKind kind);

std::string report_to_json(const SpikeReport& report);
SpikeReport report_from_json(const std::string& text);  // DataError on bad input

void save_report(const SpikeReport& report, const std::string& path);
SpikeReport load_report(const std::string& path);

}  // namespace saqt
