// SPDX-License-Identifier: Apache-2.0
#include "saqt/profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "saqt/errors.hpp"
#include "saqt/io_detail.hpp"

namespace saqt {

using ordered_json = nlohmann::ordered_json;

void StatsAccumulator::add(const Tensor& x, std::int64_t token_offset) {
    const std::size_t rows = x.rows(), width = x.row_width();
    for (std::size_t r = 0; r < rows; ++r) {
        const float* v = x.data() + r * width;
        for (std::size_t i = 0; i < width; ++i) {
            const double d = v[i];
            sum += d;
            sumsq += d * d;
            const double a = std::fabs(d);
            if (a > max_abs) {
                max_abs = a;
                token_argmax = token_offset + static_cast<std::int64_t>(r);
            }
        }
    }
    count += static_cast<std::int64_t>(x.size());
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
    sum += other.sum;
    sumsq += other.sumsq;
    count += other.count;
    if (other.max_abs > max_abs ||
        (other.max_abs == max_abs && other.token_argmax < token_argmax)) {
        max_abs = other.max_abs;
        token_argmax = other.token_argmax;
    }
}

SiteStats StatsAccumulator::finalize(const SiteId& site) const {
    SiteStats s;
    s.site = site;
    s.count = count;
    s.max_abs = max_abs;
    s.token_argmax = token_argmax;
    if (count > 0) {
        s.mean = sum / static_cast<double>(count);
        const double var = sumsq / static_cast<double>(count) - s.mean * s.mean;
        s.std_dev = std::sqrt(var > 0.0 ? var : 0.0);
    }
    return s;
}

const SiteStats* SpikeReport::find(const SiteId& id) const {
    for (const SiteStats& s : sites)
        if (s.site == id)
            return &s;
    return nullptr;
}

std::vector<std::size_t> detect_sigma(const Tensor& x, double k) {
    if (x.size() < 2)
        throw std::invalid_argument("detect_sigma: need at least 2 elements");
    if (!(k > 0.0))
        throw std::invalid_argument("detect_sigma: k must be positive");
    require_finite(x, "detect_sigma input");
    double sum = 0.0, sumsq = 0.0;
    for (float v : x.values()) {
        sum += v;
        sumsq += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(x.size());
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double std_dev = std::sqrt(var > 0.0 ? var : 0.0);

    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (std::fabs(static_cast<double>(x[i]) - mean) > k * std_dev)
            hits.push_back(i);
    return hits;
}

std::vector<int> detect_llmint8(const DimensionStats& dims, double magnitude, double layer_frac,
                                double token_frac) {
    if (dims.n_layers <= 0 || dims.d_model <= 0 || dims.seq_len <= 0)
        throw std::invalid_argument("detect_llmint8: empty dimension stats");
    if (dims.layer_dim_max.size() !=
            static_cast<std::size_t>(dims.n_layers) * static_cast<std::size_t>(dims.d_model) ||
        dims.token_dim_max.size() !=
            static_cast<std::size_t>(dims.seq_len) * static_cast<std::size_t>(dims.d_model))
        throw std::invalid_argument("detect_llmint8: stats tables do not match declared sizes");

    std::vector<int> flagged;
    for (int d = 0; d < dims.d_model; ++d) {
        int layers_hit = 0;
        for (int l = 0; l < dims.n_layers; ++l)
            if (dims.layer_dim_max[static_cast<std::size_t>(l) * dims.d_model + d] >= magnitude)
                ++layers_hit;
        int tokens_hit = 0;
        for (int t = 0; t < dims.seq_len; ++t)
            if (dims.token_dim_max[static_cast<std::size_t>(t) * dims.d_model + d] >= magnitude)
                ++tokens_hit;
        const bool layers_ok = layers_hit >= layer_frac * dims.n_layers;
        const bool tokens_ok = tokens_hit >= token_frac * dims.seq_len;
        if (layers_ok && tokens_ok)
            flagged.push_back(d);
    }
    return flagged;
}

std::vector<SiteId> detect_threshold(const SpikeReport& report, double theta) {
    if (!(theta > 0.0) || !std::isfinite(theta))
        throw std::invalid_argument("detect_threshold: theta must be finite and positive");
    std::vector<SiteId> hits;
    for (const SiteStats& s : report.sites)
        if (s.max_abs > theta)
            hits.push_back(s.site);
    return hits;
}

SpikeReport collect_stats(const ModelBundle& model, const std::vector<int>& tokens,
                          const std::string& stream_id, double theta) {
    if (tokens.empty())
        throw std::invalid_argument("collect_stats: empty token stream");
    if (!(theta > 0.0) || !std::isfinite(theta))
        throw std::invalid_argument("collect_stats: theta must be finite and positive");

    const ModelConfig& cfg = model.config;
    SpikeReport r;
    r.model_id = model.model_id;
    r.stream_id = stream_id;
    r.n_layers = cfg.n_layers;
    r.d_model = cfg.d_model;
    r.seq_len = static_cast<int>(tokens.size());
    r.theta = theta;

    r.dims.n_layers = cfg.n_layers;
    r.dims.d_model = cfg.d_model;
    r.dims.seq_len = r.seq_len;
    r.dims.layer_dim_max.assign(
        static_cast<std::size_t>(cfg.n_layers) * static_cast<std::size_t>(cfg.d_model), 0.0f);
    r.dims.token_dim_max.assign(
        static_cast<std::size_t>(r.seq_len) * static_cast<std::size_t>(cfg.d_model), 0.0f);

    std::map<SiteId, StatsAccumulator> acc;
    std::map<SiteId, bool> sigma_flag;

    forward(model, tokens, nullptr, {}, [&](const SiteId& id, const Tensor& t) {
        acc[id].add(t);
        // One forward pass means one tensor per site, so the sigma rule can
        // run on the full tensor right here.
        auto& flag = sigma_flag[id];
        if (!flag && t.size() >= 2 && !detect_sigma(t, 6.0).empty())
            flag = true;
        if (id.kind == SiteKind::rmsnorm_in && id.boundary == Boundary::input) {
            const std::size_t d = t.row_width();
            float* per_layer =
                r.dims.layer_dim_max.data() + static_cast<std::size_t>(id.layer - 1) * d;
            for (std::size_t row = 0; row < t.rows(); ++row) {
                const float* v = t.data() + row * d;
                float* per_token = r.dims.token_dim_max.data() + row * d;
                for (std::size_t i = 0; i < d; ++i) {
                    const float a = std::fabs(v[i]);
                    if (a > per_layer[i])
                        per_layer[i] = a;
                    if (a > per_token[i])
                        per_token[i] = a;
                }
            }
        }
    });

    // Fixed order: layer-major, then kind, input before output.
    for (int layer = 1; layer <= cfg.n_layers; ++layer) {
        for (SiteKind kind : kAllSiteKinds) {
            for (Boundary b : {Boundary::input, Boundary::output}) {
                const SiteId id{layer, kind, b};
                auto it = acc.find(id);
                if (it == acc.end())
                    throw InvariantError("collect_stats: no data for site " + to_string(id));
                r.sites.push_back(it->second.finalize(id));
                if (sigma_flag[id])
                    r.sigma_sites.push_back(id);
            }
        }
    }
    r.llmint8_dims = detect_llmint8(r.dims);
    r.threshold_sites = detect_threshold(r, theta);
    return r;
}

std::string export_curves_csv(const SpikeReport& report, SiteKind kind) {
    std::string csv = "layer,input_max_abs,output_max_abs\n";
    int found = 0;
    for (int layer = 1; layer <= report.n_layers; ++layer) {
        const SiteStats* in = report.find(SiteId{layer, kind, Boundary::input});
        const SiteStats* out = report.find(SiteId{layer, kind, Boundary::output});
        if (!in || !out)
            continue;
        ++found;
        csv += std::to_string(layer);
        csv += ',';
        csv += io_detail::double_to_string(in->max_abs);
        csv += ',';
        csv += io_detail::double_to_string(out->max_abs);
        csv += '\n';
    }
    if (found == 0)
        throw DataError("export_curves_csv: report has no rows for kind '" +
                        std::string(to_string(kind)) + "'");
    return csv;
}

namespace {

ordered_json site_id_to_json(const SiteId& id) {
    return ordered_json{{"layer", id.layer},
                        {"kind", to_string(id.kind)},
                        {"boundary", to_string(id.boundary)}};
}

SiteId site_id_from_json(const ordered_json& j) {
    SiteId id;
    id.layer = j.at("layer").get<int>();
    id.kind = site_kind_from_string(j.at("kind").get<std::string>());
    id.boundary = boundary_from_string(j.at("boundary").get<std::string>());
    return id;
}

}  // namespace

std::string report_to_json(const SpikeReport& report) {
    ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = "spike_report";
    j["model_id"] = report.model_id;
    j["stream_id"] = report.stream_id;
    j["n_layers"] = report.n_layers;
    j["d_model"] = report.d_model;
    j["seq_len"] = report.seq_len;
    j["theta"] = report.theta;

    ordered_json sites = ordered_json::array();
    for (const SiteStats& s : report.sites) {
        ordered_json e = site_id_to_json(s.site);
        e["max_abs"] = s.max_abs;
        e["mean"] = s.mean;
        e["std"] = s.std_dev;
        e["token_argmax"] = s.token_argmax;
        e["count"] = s.count;
        sites.push_back(std::move(e));
    }
    j["sites"] = std::move(sites);

    ordered_json det;
    det["sigma6"] = ordered_json::array();
    for (const SiteId& id : report.sigma_sites)
        det["sigma6"].push_back(site_id_to_json(id));
    det["llmint8_dims"] = report.llmint8_dims;
    det["threshold"] = ordered_json::array();
    for (const SiteId& id : report.threshold_sites)
        det["threshold"].push_back(site_id_to_json(id));
    j["detected"] = std::move(det);

    ordered_json dm;
    dm["per_layer"] = ordered_json::array();
    for (int l = 0; l < report.dims.n_layers; ++l) {
        const float* row = report.dims.layer_dim_max.data() +
                           static_cast<std::size_t>(l) * report.dims.d_model;
        dm["per_layer"].push_back(std::vector<float>(row, row + report.dims.d_model));
    }
    dm["per_token"] = ordered_json::array();
    for (int t = 0; t < report.dims.seq_len; ++t) {
        const float* row = report.dims.token_dim_max.data() +
                           static_cast<std::size_t>(t) * report.dims.d_model;
        dm["per_token"].push_back(std::vector<float>(row, row + report.dims.d_model));
    }
    j["dimension_max"] = std::move(dm);
    return j.dump(2) + "\n";
}

SpikeReport report_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("spike report: invalid JSON: ") + e.what());
    }
    try {
        if (j.at("kind").get<std::string>() != "spike_report")
            throw DataError("spike report: wrong document kind");
        if (j.at("schema_version").get<int>() != 1)
            throw DataError("spike report: unsupported schema_version");
        SpikeReport r;
        r.model_id = j.at("model_id").get<std::string>();
        r.stream_id = j.at("stream_id").get<std::string>();
        r.n_layers = j.at("n_layers").get<int>();
        r.d_model = j.at("d_model").get<int>();
        r.seq_len = j.at("seq_len").get<int>();
        r.theta = j.at("theta").get<double>();
        for (const auto& e : j.at("sites")) {
            SiteStats s;
            s.site = site_id_from_json(e);
            s.max_abs = e.at("max_abs").get<double>();
            s.mean = e.at("mean").get<double>();
            s.std_dev = e.at("std").get<double>();
            s.token_argmax = e.at("token_argmax").get<std::int64_t>();
            s.count = e.at("count").get<std::int64_t>();
            r.sites.push_back(s);
        }
        const auto& det = j.at("detected");
        for (const auto& e : det.at("sigma6"))
            r.sigma_sites.push_back(site_id_from_json(e));
        r.llmint8_dims = det.at("llmint8_dims").get<std::vector<int>>();
        for (const auto& e : det.at("threshold"))
            r.threshold_sites.push_back(site_id_from_json(e));

        const auto& dm = j.at("dimension_max");
        r.dims.n_layers = r.n_layers;
        r.dims.d_model = r.d_model;
        r.dims.seq_len = r.seq_len;
        for (const auto& row : dm.at("per_layer")) {
            const auto vals = row.get<std::vector<float>>();
            r.dims.layer_dim_max.insert(r.dims.layer_dim_max.end(), vals.begin(), vals.end());
        }
        for (const auto& row : dm.at("per_token")) {
            const auto vals = row.get<std::vector<float>>();
            r.dims.token_dim_max.insert(r.dims.token_dim_max.end(), vals.begin(), vals.end());
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("spike report: missing or mistyped field: ") + e.what());
    }
}

void save_report(const SpikeReport& report, const std::string& path) {
    io_detail::atomic_write(path, report_to_json(report));
}

SpikeReport load_report(const std::string& path) {
    return report_from_json(io_detail::read_file(path, "spike report"));
}

}  // namespace saqt
