// SPDX-License-Identifier: Apache-2.0
#include "saqt/container.hpp"

#include <bit>
#include <cstring>
#include <vector>

#include <nlohmann/json.hpp>

#include "saqt/errors.hpp"
#include "saqt/io_detail.hpp"

static_assert(std::endian::native == std::endian::little,
              "container io assumes a little-endian host");

namespace saqt {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'S', 'A', 'Q', 'T'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeText = 1;
constexpr const char* kConfigName = "__config__";

void put_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_u64(std::string& out, std::uint64_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(kDtypeF32));
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape())
        put_u64(out, d);
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
}

void put_text(std::string& out, const std::string& name, const std::string& text) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(kDtypeText));
    out.push_back(1);  // rank
    put_u64(out, text.size());
    out.append(text);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw DataError("model container: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string layer_name(int layer, const char* field) {
    return "layers." + std::to_string(layer) + "." + field;
}

ordered_json config_to_json(const ModelBundle& m) {
    const ModelConfig& c = m.config;
    ordered_json j;
    j["model_id"] = m.model_id;
    j["config"] = ordered_json{{"n_layers", c.n_layers},
                               {"d_model", c.d_model},
                               {"n_heads", c.n_heads},
                               {"d_ff", c.d_ff},
                               {"vocab_size", c.vocab_size},
                               {"max_context", c.max_context},
                               {"rope_base", c.rope_base},
                               {"rms_eps", c.rms_eps}};
    // Deltas live in JSON, not in an f32 payload, so they round-trip as
    // doubles without narrowing.
    ordered_json scales = ordered_json::object();
    for (const auto& [site, delta] : m.static_scales)
        scales[std::to_string(site.layer) + "." + to_string(site.kind)] = delta;
    j["static_scales"] = std::move(scales);
    return j;
}

void config_from_json(const std::string& text, ModelBundle& m) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model container: bad __config__ JSON: ") + e.what());
    }
    try {
        m.model_id = j.at("model_id").get<std::string>();
        const auto& c = j.at("config");
        m.config.n_layers = c.at("n_layers").get<int>();
        m.config.d_model = c.at("d_model").get<int>();
        m.config.n_heads = c.at("n_heads").get<int>();
        m.config.d_ff = c.at("d_ff").get<int>();
        m.config.vocab_size = c.at("vocab_size").get<int>();
        m.config.max_context = c.at("max_context").get<int>();
        m.config.rope_base = c.at("rope_base").get<float>();
        m.config.rms_eps = c.at("rms_eps").get<float>();
        for (const auto& [key, value] : j.at("static_scales").items()) {
            const auto dot = key.find('.');
            if (dot == std::string::npos)
                throw DataError("model container: bad scale key '" + key + "'");
            QuantSite site;
            site.layer = std::stoi(key.substr(0, dot));
            site.kind = site_kind_from_string(key.substr(dot + 1));
            m.static_scales[site] = value.get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model container: missing config field: ") + e.what());
    }
}

}  // namespace

void save_model(const ModelBundle& model, const std::string& path) {
    validate(model.config);
    validate_shapes(model);

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    tensors.emplace_back("embedding", &model.embedding);
    for (int layer = 1; layer <= model.config.n_layers; ++layer) {
        const LayerWeights& lw = model.layers[layer - 1];
        tensors.emplace_back(layer_name(layer, "rmsnorm_in_gamma"), &lw.rmsnorm_in_gamma);
        tensors.emplace_back(layer_name(layer, "wq"), &lw.wq);
        tensors.emplace_back(layer_name(layer, "wk"), &lw.wk);
        tensors.emplace_back(layer_name(layer, "wv"), &lw.wv);
        tensors.emplace_back(layer_name(layer, "wout"), &lw.wout);
        tensors.emplace_back(layer_name(layer, "rmsnorm_post_gamma"), &lw.rmsnorm_post_gamma);
        tensors.emplace_back(layer_name(layer, "wgate"), &lw.wgate);
        tensors.emplace_back(layer_name(layer, "wup"), &lw.wup);
        tensors.emplace_back(layer_name(layer, "wdown"), &lw.wdown);
    }
    tensors.emplace_back("final_norm_gamma", &model.final_norm_gamma);
    tensors.emplace_back("lm_head", &model.lm_head);

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kContainerVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size() + 1));  // +1 for __config__
    put_text(out, kConfigName, config_to_json(model).dump());
    for (const auto& [name, t] : tensors)
        put_tensor(out, name, *t);
    io_detail::atomic_write(path, out);
}

ModelBundle load_model(const std::string& path) {
    const std::string buf = io_detail::read_file(path, "model container");
    Reader r{buf};

    if (r.bytes(4) != std::string(kMagic, 4))
        throw DataError("model container: bad magic (not a SAQT file)");
    const std::uint32_t version = r.u32();
    if (version != kContainerVersion)
        throw DataError("model container: unknown version " + std::to_string(version));
    const std::uint32_t count = r.u32();

    ModelBundle m;
    bool have_config = false;
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        const std::uint8_t dtype = r.u8();
        const std::uint8_t rank = r.u8();
        std::vector<std::size_t> shape;
        std::size_t volume = 1;
        for (std::uint8_t k = 0; k < rank; ++k) {
            const std::uint64_t d = r.u64();
            if (d == 0 || d > (1u << 30) || volume > (1u << 30))
                throw DataError("model container: implausible tensor dimension in '" + name + "'");
            shape.push_back(static_cast<std::size_t>(d));
            volume *= static_cast<std::size_t>(d);
        }
        if (dtype == kDtypeText) {
            if (name != kConfigName)
                throw DataError("model container: unexpected text tensor '" + name + "'");
            config_from_json(r.bytes(volume), m);
            have_config = true;
        } else if (dtype == kDtypeF32) {
            std::vector<float> data(volume);
            r.need(volume * sizeof(float));
            std::memcpy(data.data(), buf.data() + r.pos, volume * sizeof(float));
            r.pos += volume * sizeof(float);
            tensors.emplace_back(name, Tensor(std::move(shape), std::move(data)));
        } else {
            throw DataError("model container: unknown dtype code " + std::to_string(dtype) +
                            " for '" + name + "'");
        }
    }
    if (r.pos != buf.size())
        throw DataError("model container: trailing bytes after declared tensors");
    if (!have_config)
        throw DataError("model container: missing __config__ tensor");
    validate(m.config);

    auto take = [&](const std::string& name) -> Tensor {
        for (auto& [n, t] : tensors)
            if (n == name)
                return std::move(t);
        throw DataError("model container: missing tensor '" + name + "'");
    };
    m.embedding = take("embedding");
    m.layers.resize(m.config.n_layers);
    for (int layer = 1; layer <= m.config.n_layers; ++layer) {
        LayerWeights& lw = m.layers[layer - 1];
        lw.rmsnorm_in_gamma = take(layer_name(layer, "rmsnorm_in_gamma"));
        lw.wq = take(layer_name(layer, "wq"));
        lw.wk = take(layer_name(layer, "wk"));
        lw.wv = take(layer_name(layer, "wv"));
        lw.wout = take(layer_name(layer, "wout"));
        lw.rmsnorm_post_gamma = take(layer_name(layer, "rmsnorm_post_gamma"));
        lw.wgate = take(layer_name(layer, "wgate"));
        lw.wup = take(layer_name(layer, "wup"));
        lw.wdown = take(layer_name(layer, "wdown"));
    }
    m.final_norm_gamma = take("final_norm_gamma");
    m.lm_head = take("lm_head");
    if (tensors.size() + 1 != count)
        throw DataError("model container: tensor count mismatch");
    validate_shapes(m);
    return m;
}

}  // namespace saqt
