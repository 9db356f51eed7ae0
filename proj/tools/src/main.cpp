// SPDX-License-Identifier: Apache-2.0
//
// saqt command line: synthesize models, profile activation spikes, build
// precision plans, evaluate them and tabulate the results.
//
// Exit codes: 0 success, 2 usage error, 3 unusable input data,
// 4 broken numeric invariant or internal failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "saqt/container.hpp"
#include "saqt/errors.hpp"
#include "saqt/io_detail.hpp"
#include "saqt/model.hpp"
#include "saqt/plan.hpp"
#include "saqt/profile.hpp"
#include "saqt/quant.hpp"
#include "saqt/tokens.hpp"
#include "saqt/version.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;
using saqt::io_detail::atomic_write;
using saqt::io_detail::double_to_string;

struct Ctx {
    std::string command;
    std::chrono::steady_clock::time_point start;
};

ordered_json make_manifest(const Ctx& ctx, const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs,
                           std::optional<std::uint64_t> seed = {}) {
    ordered_json m;
    m["command"] = ctx.command;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    if (seed)
        m["seed"] = *seed;
    m["version"] = saqt::kVersion;
    return m;
}

// The sidecar carries the wall-clock duration so the primary output stays
// byte-identical across reruns of the same command.
void write_sidecar(const Ctx& ctx, const std::string& out_path, ordered_json manifest) {
    const auto elapsed = std::chrono::steady_clock::now() - ctx.start;
    manifest["duration_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    atomic_write(out_path + ".manifest.json", manifest.dump(2) + "\n");
}

void write_json_output(const Ctx& ctx, const std::string& path, ordered_json j,
                       const ordered_json& manifest) {
    j["manifest"] = manifest;
    atomic_write(path, j.dump(2) + "\n");
    write_sidecar(ctx, path, manifest);
}

ordered_json load_json(const std::string& path, const char* what) {
    const std::string text = saqt::io_detail::read_file(path, what);
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw saqt::DataError(std::string(what) + " '" + path + "': invalid JSON: " + e.what());
    }
}

int parse_int_field(const std::string& v, const std::string& what) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument(what + ": bad integer '" + v + "'");
    }
}

float parse_float_field(const std::string& v, const std::string& what) {
    try {
        std::size_t pos = 0;
        const float x = std::stof(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument(what + ": bad number '" + v + "'");
    }
}

// "layer=2,kind=down,channel=5,scale=300"; unset keys keep their defaults.
saqt::ChannelSpike parse_spike(const std::string& text) {
    saqt::ChannelSpike s;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        const std::size_t end = std::min(text.find(',', begin), text.size());
        const std::string item = text.substr(begin, end - begin);
        begin = end + 1;
        if (item.empty())
            continue;
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--inject: expected key=value, got '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string val = item.substr(eq + 1);
        if (key == "layer") {
            s.layer = parse_int_field(val, "--inject layer");
        } else if (key == "kind") {
            try {
                s.kind = saqt::site_kind_from_string(val);
            } catch (const saqt::DataError&) {
                throw std::invalid_argument("--inject: unknown kind '" + val + "'");
            }
        } else if (key == "channel") {
            s.channel = parse_int_field(val, "--inject channel");
        } else if (key == "scale") {
            s.scale = parse_float_field(val, "--inject scale");
        } else {
            throw std::invalid_argument("--inject: unknown key '" + key + "'");
        }
    }
    return s;
}

struct StreamOpts {
    std::string tokens_file;
    std::optional<std::uint64_t> seed;
    int length = 64;
};

void add_stream_options(CLI::App* cmd, StreamOpts& o, const std::string& prefix,
                        const std::string& what) {
    auto* file = cmd->add_option("--" + prefix + "tokens", o.tokens_file,
                                 what + " from the raw bytes of this file");
    auto* seed = cmd->add_option("--" + prefix + "stream-seed", o.seed,
                                 what + " drawn from this generator seed");
    auto* len = cmd->add_option("--" + prefix + "stream-len", o.length,
                                "length of the generated " + what);
    file->excludes(seed);
    len->needs(seed);
    len->check(CLI::PositiveNumber);
}

// tokens plus a stable stream id; `input_path` collects the file for the manifest.
std::pair<std::vector<int>, std::string> resolve_stream(const StreamOpts& o, int vocab,
                                                        const std::string& what,
                                                        std::vector<std::string>& input_paths) {
    if (o.seed && !o.tokens_file.empty())
        throw std::invalid_argument(what + ": give either a token file or a stream seed");
    if (o.seed)
        return {saqt::generate_stream(*o.seed, o.length, vocab),
                saqt::stream_id_for_seed(*o.seed, o.length)};
    if (!o.tokens_file.empty()) {
        input_paths.push_back(o.tokens_file);
        return {saqt::byte_tokenize_file(o.tokens_file, vocab),
                saqt::stream_id_for_file(o.tokens_file)};
    }
    throw std::invalid_argument(what + ": a token file or a stream seed is required");
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// ---- synth ----------------------------------------------------------------

struct SynthOpts {
    std::string out;
    std::uint64_t seed = 1;
    saqt::ModelConfig cfg = saqt::default_synth_config();
    std::vector<std::string> injections;
    bool bot = false;
    int bot_channel = 0;
    float bot_scale = 300.0f;
};

void run_synth(const Ctx& ctx, const SynthOpts& o) {
    saqt::SpikeInjection inject;
    for (const auto& text : o.injections)
        inject.channels.push_back(parse_spike(text));
    inject.bot = o.bot;
    inject.bot_channel = o.bot_channel;
    inject.bot_scale = o.bot_scale;

    const saqt::ModelBundle model = saqt::synth_model(o.cfg, inject, o.seed);
    saqt::save_model(model, o.out);
    write_sidecar(ctx, o.out, make_manifest(ctx, {}, {o.out}, o.seed));
    std::cout << "wrote " << o.out << " (" << model.model_id << ")\n";
}

// ---- profile --------------------------------------------------------------

struct ProfileOpts {
    std::string model;
    StreamOpts stream;
    double theta = 100.0;
    std::string out;
    std::string curves_dir;
};

void run_profile(const Ctx& ctx, const ProfileOpts& o) {
    const saqt::ModelBundle model = saqt::load_model(o.model);
    std::vector<std::string> inputs{o.model};
    auto [tokens, stream_id] =
        resolve_stream(o.stream, model.config.vocab_size, "token stream", inputs);

    const saqt::SpikeReport report = saqt::collect_stats(model, tokens, stream_id, o.theta);

    std::vector<std::string> outputs{o.out};
    if (!o.curves_dir.empty()) {
        std::filesystem::create_directories(o.curves_dir);
        for (saqt::SiteKind kind : saqt::default_scope()) {
            const std::string path =
                (std::filesystem::path(o.curves_dir) / ("curve_" + std::string(to_string(kind)) + ".csv"))
                    .string();
            atomic_write(path, saqt::export_curves_csv(report, kind));
            outputs.push_back(path);
        }
    }

    ordered_json j = ordered_json::parse(saqt::report_to_json(report));
    write_json_output(ctx, o.out, std::move(j), make_manifest(ctx, inputs, outputs));

    std::cout << "profiled " << report.n_layers << " layers over " << report.seq_len
              << " tokens: " << report.threshold_sites.size() << " sites above theta="
              << double_to_string(report.theta) << ", " << report.sigma_sites.size()
              << " sigma sites, " << report.llmint8_dims.size() << " outlier dims\n";
}

// ---- plan -----------------------------------------------------------------

struct PlanOpts {
    std::string report;
    std::string out;
    double theta = 100.0;
    std::string high = "fp16";
    int bits = 8;
    std::string high_applies = "both";
    bool naive = false;
    bool full = false;
    bool random = false;
    std::optional<std::uint64_t> seed;
    std::string reference;
};

void run_plan(const Ctx& ctx, const PlanOpts& o) {
    if (int(o.naive) + int(o.full) + int(o.random) > 1)
        throw std::invalid_argument("--naive, --full and --random are mutually exclusive");

    const saqt::SpikeReport report = saqt::load_report(o.report);
    std::vector<std::string> inputs{o.report};

    saqt::PrecisionPlan plan;
    if (o.naive) {
        plan = saqt::uniform_plan(o.bits);
        plan.model_id = report.model_id;
    } else if (o.full) {
        plan = saqt::full_plan();
        plan.model_id = report.model_id;
    } else if (o.random) {
        if (!o.seed)
            throw std::invalid_argument("--random needs --seed");
        if (o.reference.empty())
            throw std::invalid_argument("--random needs --reference (the plan to mirror)");
        const saqt::PrecisionPlan ref = saqt::load_plan(o.reference);
        inputs.push_back(o.reference);
        plan = saqt::build_random_plan(report, ref, *o.seed);
    } else {
        plan = saqt::build_targeted_plan(report, o.theta,
                                         saqt::treatment_from_string(o.high), o.bits);
        plan.high_applies = saqt::high_applies_from_string(o.high_applies);
    }

    ordered_json j = ordered_json::parse(saqt::plan_to_json(plan));
    write_json_output(ctx, o.out, std::move(j), make_manifest(ctx, inputs, {o.out}, o.seed));

    std::size_t high_sites = 0;
    for (const auto& s : plan.sites)
        if (s.treatment.is_high())
            ++high_sites;
    std::cout << "plan for " << plan.model_id << ": " << plan.sites.size()
              << " listed sites (" << high_sites << " high precision)\n";
}

// ---- eval -----------------------------------------------------------------

struct EvalOpts {
    std::string model;
    std::string plan;
    StreamOpts stream;
    std::string granularity = "per_tensor";
    std::string scale_mode = "dynamic";
    StreamOpts calib;
    std::optional<std::size_t> exclude_token;
    std::string label = "eval";
    std::string out;
};

void run_eval(const Ctx& ctx, const EvalOpts& o) {
    saqt::ModelBundle model = saqt::load_model(o.model);
    const saqt::PrecisionPlan plan = saqt::load_plan(o.plan);
    if (!plan.model_id.empty() && plan.model_id != model.model_id)
        throw saqt::DataError("plan was built for '" + plan.model_id +
                              "' but the model is '" + model.model_id + "'");

    std::vector<std::string> inputs{o.model, o.plan};
    auto [tokens, stream_id] =
        resolve_stream(o.stream, model.config.vocab_size, "token stream", inputs);

    saqt::EvalOptions opts;
    opts.granularity = saqt::granularity_from_string(o.granularity);
    opts.exclude_token = o.exclude_token;

    const bool is_static = o.scale_mode == "static";
    const bool calib_given = !o.calib.tokens_file.empty() || o.calib.seed.has_value();
    if (!is_static && calib_given)
        throw std::invalid_argument("calibration tokens given but --scale-mode is dynamic");
    if (is_static) {
        auto [calib_tokens, calib_id] =
            resolve_stream(o.calib, model.config.vocab_size, "calibration stream", inputs);
        (void)calib_id;
        std::vector<saqt::QuantSite> sites;
        for (int layer = 1; layer <= model.config.n_layers; ++layer)
            for (saqt::SiteKind kind : plan.scope)
                if (saqt::is_linear(kind))
                    sites.push_back({layer, kind});
        model.static_scales =
            saqt::calibrate_static_scales(model, calib_tokens, sites, plan.default_bits);
        opts.use_static_scales = true;
    }

    const saqt::QuantErrorReport rep = saqt::quant_error(model, tokens, plan, opts);

    ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = "eval_metrics";
    j["label"] = o.label;
    j["model_id"] = model.model_id;
    j["stream_id"] = stream_id;
    j["granularity"] = saqt::to_string(opts.granularity);
    j["scale_mode"] = is_static ? "static" : "dynamic";
    if (o.exclude_token)
        j["exclude_token"] = *o.exclude_token;
    else
        j["exclude_token"] = nullptr;
    j["ppl_full"] = rep.ppl_full;
    j["ppl_plan"] = rep.ppl_plan;
    j["ppl_delta"] = rep.ppl_delta;
    j["logit_mse"] = rep.logit_mse;
    j["logit_max_abs_err"] = rep.logit_max_abs_err;
    write_json_output(ctx, o.out, std::move(j), make_manifest(ctx, inputs, {o.out}));

    std::cout << o.label << ": ppl " << double_to_string(rep.ppl_full) << " -> "
              << double_to_string(rep.ppl_plan)
              << " (delta " << double_to_string(rep.ppl_delta)
              << "), logit mse " << double_to_string(rep.logit_mse) << "\n";
}

// ---- compare --------------------------------------------------------------

struct CompareOpts {
    std::vector<std::string> metrics;
    std::string out;
};

void run_compare(const Ctx& ctx, const CompareOpts& o) {
    std::string csv = "label,ppl_full,ppl_plan,ppl_delta,logit_mse,logit_max_abs_err\n";
    for (const auto& path : o.metrics) {
        const ordered_json j = load_json(path, "metrics file");
        try {
            if (j.at("kind").get<std::string>() != "eval_metrics")
                throw saqt::DataError("metrics file '" + path + "': kind is not eval_metrics");
            csv += csv_field(j.at("label").get<std::string>());
            for (const char* key : {"ppl_full", "ppl_plan", "ppl_delta", "logit_mse",
                                    "logit_max_abs_err"}) {
                csv += ',';
                csv += double_to_string(j.at(key).get<double>());
            }
            csv += '\n';
        } catch (const nlohmann::json::exception& e) {
            throw saqt::DataError("metrics file '" + path + "': missing or mistyped field: " +
                                  e.what());
        }
    }
    atomic_write(o.out, csv);
    write_sidecar(ctx, o.out, make_manifest(ctx, o.metrics, {o.out}));
    std::cout << "wrote " << o.out << " (" << o.metrics.size() << " rows)\n";
}

}  // namespace

int main(int argc, char** argv) {
    Ctx ctx;
    ctx.start = std::chrono::steady_clock::now();
    for (int i = 0; i < argc; ++i) {
        if (i)
            ctx.command += ' ';
        ctx.command += argv[i];
    }

    CLI::App app{"spike-aware mixed precision quantization toolkit"};
    app.set_version_flag("--version", saqt::kVersion);
    app.require_subcommand(1);

    SynthOpts synth;
    auto* cmd_synth = app.add_subcommand("synth", "synthesize a model container");
    cmd_synth->add_option("--out", synth.out, "output model path")->required();
    cmd_synth->add_option("--seed", synth.seed, "weight generator seed");
    cmd_synth->add_option("--layers", synth.cfg.n_layers)->check(CLI::PositiveNumber);
    cmd_synth->add_option("--d-model", synth.cfg.d_model)->check(CLI::PositiveNumber);
    cmd_synth->add_option("--heads", synth.cfg.n_heads)->check(CLI::PositiveNumber);
    cmd_synth->add_option("--d-ff", synth.cfg.d_ff)->check(CLI::PositiveNumber);
    cmd_synth->add_option("--vocab", synth.cfg.vocab_size)->check(CLI::PositiveNumber);
    cmd_synth->add_option("--context", synth.cfg.max_context)->check(CLI::PositiveNumber);
    cmd_synth->add_option("--rope-base", synth.cfg.rope_base);
    cmd_synth->add_option("--rms-eps", synth.cfg.rms_eps);
    cmd_synth->add_option("--inject", synth.injections,
                          "spike a weight column: layer=2,kind=down,channel=5,scale=300");
    cmd_synth->add_flag("--bot", synth.bot, "spike one embedding channel of token 0");
    cmd_synth->add_option("--bot-channel", synth.bot_channel);
    cmd_synth->add_option("--bot-scale", synth.bot_scale);

    ProfileOpts profile;
    auto* cmd_profile = app.add_subcommand("profile", "collect activation statistics");
    cmd_profile->add_option("--model", profile.model, "model container")->required();
    add_stream_options(cmd_profile, profile.stream, "", "token stream");
    cmd_profile->add_option("--theta", profile.theta, "spike threshold on max|x|");
    cmd_profile->add_option("--out", profile.out, "output report path")->required();
    cmd_profile->add_option("--curves", profile.curves_dir,
                            "also write per-kind layer curves into this directory");

    PlanOpts plan;
    auto* cmd_plan = app.add_subcommand("plan", "build a precision plan from a report");
    cmd_plan->add_option("--report", plan.report, "spike report")->required();
    cmd_plan->add_option("--out", plan.out, "output plan path")->required();
    cmd_plan->add_option("--theta", plan.theta, "threshold for high precision sites");
    cmd_plan->add_option("--high", plan.high, "treatment for spiky sites")
        ->check(CLI::IsMember({"fp16", "fp8_e5m2", "fp8_e4m3", "full"}));
    cmd_plan->add_option("--bits", plan.bits, "integer width for everything else")
        ->check(CLI::Range(2, 8));
    cmd_plan->add_option("--high-applies", plan.high_applies,
                         "what the high treatment covers")
        ->check(CLI::IsMember({"activations", "weights", "both"}));
    cmd_plan->add_flag("--naive", plan.naive, "uniform integer plan, no high sites");
    cmd_plan->add_flag("--full", plan.full, "full precision plan");
    cmd_plan->add_flag("--random", plan.random,
                       "control plan with randomly placed high sites");
    cmd_plan->add_option("--seed", plan.seed, "site draw seed for --random");
    cmd_plan->add_option("--reference", plan.reference,
                         "targeted plan whose high-site count --random mirrors");

    EvalOpts eval;
    auto* cmd_eval = app.add_subcommand("eval", "measure quantization error under a plan");
    cmd_eval->add_option("--model", eval.model, "model container")->required();
    cmd_eval->add_option("--plan", eval.plan, "precision plan")->required();
    add_stream_options(cmd_eval, eval.stream, "", "token stream");
    cmd_eval->add_option("--granularity", eval.granularity, "activation scale granularity")
        ->check(CLI::IsMember({"per_tensor", "per_token"}));
    cmd_eval->add_option("--scale-mode", eval.scale_mode, "activation scale source")
        ->check(CLI::IsMember({"dynamic", "static"}));
    add_stream_options(cmd_eval, eval.calib, "calib-", "calibration stream");
    cmd_eval->add_option("--exclude-token", eval.exclude_token,
                         "token position left out of activation quantization");
    cmd_eval->add_option("--label", eval.label, "row label for compare");
    cmd_eval->add_option("--out", eval.out, "output metrics path")->required();

    CompareOpts compare;
    auto* cmd_compare = app.add_subcommand("compare", "tabulate metric files as CSV");
    cmd_compare->add_option("metrics", compare.metrics, "metric files")->required();
    cmd_compare->add_option("--out", compare.out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
        if (app.got_subcommand(cmd_synth))
            run_synth(ctx, synth);
        else if (app.got_subcommand(cmd_profile))
            run_profile(ctx, profile);
        else if (app.got_subcommand(cmd_plan))
            run_plan(ctx, plan);
        else if (app.got_subcommand(cmd_eval))
            run_eval(ctx, eval);
        else if (app.got_subcommand(cmd_compare))
            run_compare(ctx, compare);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const saqt::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const saqt::InvariantError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
