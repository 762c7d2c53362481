#pragma once

// `finecir` command line. run() is the whole program; tools/finecir.cpp only
// forwards argv and the standard streams.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error. Every
// failure ends with one JSON line on the error stream:
//   {"error":{"kind":"usage|config|runtime|pipeline_halted","message":..}}

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "finecir/cli/run_config.hpp"
#include "finecir/core/manifest.hpp"
#include "finecir/eval/evaluate.hpp"
#include "finecir/model/checkpoint.hpp"
#include "finecir/pipeline/live_client.hpp"
#include "finecir/pipeline/pipeline.hpp"
#include "finecir/review/server.hpp"
#include "finecir/sgparse/external_parser.hpp"
#include "finecir/sgparse/rule_parser.hpp"
#include "finecir/synth/pipeline_fixture.hpp"
#include "finecir/synth/shapes.hpp"
#include "finecir/train/trainer.hpp"

namespace finecir::cli {

namespace fs = std::filesystem;

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    int verbosity = 0;
};

inline void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON config file with per-module sections")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "Seed applied to every module");
    sub->add_flag("-v,--verbose", c.verbosity, "More progress output on stderr");
}

inline RunConfig effective_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
    if (c.seed) cfg.set_seed(*c.seed);
    return cfg;
}

inline std::uint64_t effective_seed(const RunConfig& cfg) { return cfg.model.seed; }

inline std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
    return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw IoError("cannot write " + tmp);
    }
    fs::rename(tmp, path);
}

inline void write_provenance(const fs::path& path, const std::string& command, const RunConfig& cfg,
                             const nlohmann::ordered_json& inputs) {
    auto p = provenance_header(command, cfg.to_json(), effective_seed(cfg));
    p["inputs"] = inputs;
    write_text(path, p.dump(2) + "\n");
}

inline std::shared_ptr<const eval::VlpBackend> make_vlp(const std::string& name, const FeatureStore& images) {
    if (name != "attribute") throw UsageError("unknown --vlp '" + name + "' (available: attribute)");
    if (images.dim() != static_cast<std::size_t>(synth::feature_dim()))
        throw UsageError("the attribute backend needs " + std::to_string(synth::feature_dim()) +
                         "-dim shapes features; the feature store has " + std::to_string(images.dim()));
    return std::make_shared<synth::AttributeVlp>();
}

inline pipeline::ClientSet make_clients(const std::string& mode, const ClientsSection& c) {
    if (mode == "mock") return pipeline::mock_clients();
    if (mode != "live") throw UsageError("--clients must be mock or live");
    auto live = [&](pipeline::Role role, const std::string& model) {
        pipeline::LiveClientConfig lc;
        lc.endpoint = c.endpoint;
        lc.path = c.path;
        lc.model = model;
        lc.api_key_env = c.api_key_env;
        lc.timeout_s = c.timeout_s;
        return std::make_shared<pipeline::LiveMllmClient>(role, lc);
    };
    if (c.endpoint.empty()) throw ConfigError("clients.endpoint is required for --clients live");
    return {live(pipeline::Role::pair_checker, c.pair_checker_model),
            live(pipeline::Role::finemt_generator, c.generator_model),
            live(pipeline::Role::refiner, c.refiner_model), live(pipeline::Role::compressor, c.compressor_model)};
}

inline review::StoreOptions store_options(const RunConfig& cfg) {
    review::StoreOptions o;
    o.token_limit = cfg.pipeline.token_limit;
    o.clock = cfg.review.clock == "logical" ? review::logical_time() : review::system_time_ms();
    return o;
}

inline std::vector<int> parse_int_list(const std::string& s, const char* flag) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size() || v < 1) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError(std::string(flag) + ": '" + item + "' is not a positive integer");
        }
    }
    if (out.empty()) throw UsageError(std::string(flag) + " is empty");
    return out;
}

// ---------------------------------------------------------------- subcommands

struct SgArgs {
    std::string text, backend = "rule", command, variant = "external";
};

inline int cmd_sg_parse(const SgArgs& a, std::ostream& out) {
    std::unique_ptr<sg::ParserBackend> p;
    if (a.backend == "rule") p = std::make_unique<sg::RuleParser>();
    else if (a.backend == "external") {
        if (a.command.empty()) throw UsageError("--backend external needs --command");
        p = std::make_unique<sg::ExternalParser>(a.command, a.variant);
    } else
        throw UsageError("--backend must be rule or external");
    out << sg::to_json(p->parse(a.text)).dump() << "\n";
    return 0;
}

inline int cmd_stats(const std::string& manifest, std::ostream& out) {
    const auto tok = default_tokenizer();
    out << manifest_stats(load_manifest(manifest, *tok), *tok).to_json().dump() << "\n";
    return 0;
}

struct SynthArgs {
    Common common;
    std::string out_dir;
    std::optional<std::size_t> images;
    bool fixture = false;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
    auto cfg = effective_config(a.common);
    if (a.images) cfg.synth.images = *a.images;
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    if (a.fixture) {
        const auto fx = synth::make_pipeline_fixture(a.common.seed.value_or(7));
        fx.world.store.save((dir / "images.jsonl").string());
        save_manifest((dir / "manifest.jsonl").string(), fx.manifest);
    } else {
        const auto w = synth::make_world(cfg.synth.images, cfg.synth.data.seed);
        w.store.save((dir / "images.jsonl").string());
        save_manifest((dir / "manifest.jsonl").string(), synth::make_manifest(w, cfg.synth.data));
    }
    write_provenance(dir / "provenance.json", a.fixture ? "synth --fixture" : "synth", cfg, nlohmann::ordered_json::object());
    out << nlohmann::ordered_json{{"images", (dir / "images.jsonl").string()},
                                  {"manifest", (dir / "manifest.jsonl").string()}}
               .dump()
        << "\n";
    return 0;
}

struct PipelineArgs {
    Common common;
    std::string group, manifest, images, out_dir, clients = "mock", review_dir, prompts_dir, vlp = "attribute";
};

inline int cmd_pipeline(const PipelineArgs& a, std::ostream& out, std::ostream& err) {
    auto cfg = effective_config(a.common);
    if (!a.review_dir.empty()) cfg.review.dir = a.review_dir;
    const auto stages = pipeline::stage_group(a.group);
    const auto tok = default_tokenizer();
    const auto manifest = load_manifest(a.manifest, *tok);
    const auto images = FeatureStore::load(a.images);
    const auto vlp = make_vlp(a.vlp, images);
    const auto prompts = a.prompts_dir.empty() ? pipeline::PromptRegistry::builtin()
                                               : pipeline::PromptRegistry::load_dir(a.prompts_dir);
    review::ReviewStore store(cfg.review.dir, store_options(cfg));
    pipeline::PipelineContext ctx{images, *vlp, make_clients(a.clients, cfg.clients), prompts, store, tok};

    const fs::path dir(a.out_dir);
    const nlohmann::ordered_json inputs{{"manifest", file_hash(a.manifest)},
                                        {"images", file_hash(a.images)},
                                        {"clients", a.clients},
                                        {"stages", a.group}};
    auto emit = [&](const pipeline::PipelineResult& r) {
        fs::create_directories(dir);
        std::ostringstream m;
        write_manifest(m, r.manifest);
        write_text(dir / "manifest.jsonl", m.str());
        write_text(dir / "ledger.jsonl", r.ledger.to_jsonl());
        write_provenance(dir / "provenance.json", "pipeline " + a.group, cfg, inputs);
    };
    try {
        const auto r = pipeline::run_pipeline(manifest, cfg.pipeline, ctx, stages);
        emit(r);
        std::size_t open = 0;
        for (const auto& [_, n] : store.open_counts()) open += n;
        out << nlohmann::ordered_json{{"finalized", r.ledger.finalized},
                                      {"discarded", r.ledger.discarded},
                                      {"awaiting_review", r.ledger.awaiting_review},
                                      {"in_progress", r.ledger.in_progress},
                                      {"open_review_items", open},
                                      {"out_dir", dir.string()}}
                   .dump()
            << "\n";
        if (a.common.verbosity > 0) err << r.ledger.to_jsonl();
        return 0;
    } catch (const pipeline::PipelineHalted& e) {
        emit(e.partial);
        err << nlohmann::json{{"error", {{"kind", "pipeline_halted"}, {"message", e.what()}, {"resume_from",
                                                                                             (dir / "manifest.jsonl").string()}}}}
                   .dump()
            << "\n";
        return 1;
    }
}

struct TrainArgs {
    Common common;
    std::string manifest, images, out, metrics;
    std::optional<long> steps;
    bool timing = false;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    auto cfg = effective_config(a.common);
    if (a.steps) cfg.train.steps = *a.steps;
    const auto manifest = load_manifest(a.manifest);
    const auto images = FeatureStore::load(a.images);
    if (cfg.model.feature_dim == 0) cfg.model.feature_dim = static_cast<int>(images.dim());
    FineCirModel model(cfg.model);
    const auto examples = synth::examples(manifest, images, Split::train);
    if (examples.empty()) throw std::runtime_error("no finalized train triplets in " + a.manifest);

    std::ofstream metrics;
    if (!a.metrics.empty()) {
        if (fs::path(a.metrics).has_parent_path()) fs::create_directories(fs::path(a.metrics).parent_path());
        metrics.open(a.metrics, std::ios::trunc);
        if (!metrics) throw IoError("cannot write " + a.metrics);
        metrics << nlohmann::ordered_json{{"event", "provenance"},
                                          {"header", provenance_header("train", cfg.to_json(), effective_seed(cfg))}}
                       .dump()
                << "\n";
    }
    train::Validator validate;
    if (manifest.counts.test > 0) {
        validate = [&](long) {
            return eval::evaluate_model(model, manifest, images, Split::test, cfg.eval.options()).to_json();
        };
    }
    const auto summary = train::run_training(model, examples, cfg.train, a.metrics.empty() ? nullptr : &metrics,
                                             validate, a.timing ? train::steady_clock_ms() : train::zero_clock());
    save_checkpoint(a.out, model, summary.temperature, summary.steps);
    if (a.common.verbosity > 0) err << "trained " << summary.steps << " steps\n";
    out << nlohmann::ordered_json{{"steps", summary.steps},
                                  {"first_loss", summary.first_loss},
                                  {"last_loss", summary.last_loss},
                                  {"temperature", summary.temperature},
                                  {"checkpoint", a.out}}
               .dump()
        << "\n";
    return 0;
}

struct EvalArgs {
    Common common;
    std::string checkpoint, manifest, images, out, ks, subset_ks, split, baseline = "none", vlp = "attribute";
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
    auto cfg = effective_config(a.common);
    if (!a.ks.empty()) cfg.eval.ks = parse_int_list(a.ks, "--ks");
    if (!a.subset_ks.empty()) cfg.eval.subset_ks = parse_int_list(a.subset_ks, "--subset-ks");
    if (!a.split.empty()) cfg.eval.split = a.split;
    cfg.eval.validate();
    const auto manifest = load_manifest(a.manifest);
    const auto images = FeatureStore::load(a.images);
    const Split split = *parse_split(cfg.eval.split);
    eval::MetricReport rep;
    std::string system;
    if (a.baseline == "none") {
        if (a.checkpoint.empty()) throw UsageError("eval needs --checkpoint unless --baseline is given");
        const auto ck = load_checkpoint(a.checkpoint);
        rep = eval::evaluate_model(*ck.model, manifest, images, split, cfg.eval.options());
        system = "finecir";
    } else {
        std::optional<eval::Baseline> kind;
        for (auto b : {eval::Baseline::text_only, eval::Baseline::image_only, eval::Baseline::image_plus_text})
            if (eval::to_string(b) == a.baseline) kind = b;
        if (!kind) throw UsageError("--baseline must be none, text_only, image_only or image_plus_text");
        rep = eval::evaluate_baseline(*kind, *make_vlp(a.vlp, images), manifest, images, split, cfg.eval.options());
        system = a.baseline;
    }
    out << rep.table();
    if (!a.out.empty()) {
        nlohmann::ordered_json j{{"provenance", provenance_header("eval", cfg.to_json(), effective_seed(cfg))},
                                 {"system", system},
                                 {"split", cfg.eval.split},
                                 {"inputs", {{"manifest", file_hash(a.manifest)}, {"images", file_hash(a.images)}}},
                                 {"metrics", rep.to_json()}};
        if (!a.checkpoint.empty()) j["inputs"]["checkpoint"] = file_hash(a.checkpoint);
        write_text(a.out, j.dump(2) + "\n");
    }
    return 0;
}

struct ServeArgs {
    Common common;
    std::string review_dir, host, manifest, static_dir;
    std::optional<int> port;
};

inline int cmd_serve(const ServeArgs& a, std::ostream& out) {
    auto cfg = effective_config(a.common);
    if (!a.review_dir.empty()) cfg.review.dir = a.review_dir;
    if (!a.host.empty()) cfg.review.host = a.host;
    if (a.port) cfg.review.port = *a.port;
    if (!a.static_dir.empty()) cfg.review.static_dir = a.static_dir;
    review::ReviewStore store(cfg.review.dir, store_options(cfg));
    review::ServerOptions opt;
    opt.static_dir = cfg.review.static_dir;
    opt.cors_origin = cfg.review.cors_origin;
    if (!cfg.review.auth_token_env.empty()) {
        const char* token = std::getenv(cfg.review.auth_token_env.c_str());
        if (!token || !*token) throw ConfigError("review.auth_token_env names an unset variable");
        opt.authorize = review::bearer_auth(token);
    }
    if (!a.manifest.empty()) {
        std::map<std::string, std::string> uris;
        for (const auto& t : load_manifest(a.manifest).triplets) {
            uris[t.ref.id] = t.ref.uri;
            uris[t.target.id] = t.target.uri;
        }
        opt.assets = review::map_resolver(std::move(uris));
    }
    review::ReviewServer server(store, opt);
    const int port = server.bind(cfg.review.host, cfg.review.port);
    if (port < 0) throw std::runtime_error("cannot bind " + cfg.review.host);
    out << nlohmann::ordered_json{{"listening", cfg.review.host + ":" + std::to_string(port)},
                                  {"review_dir", cfg.review.dir}}
               .dump()
        << std::endl;
    return server.serve() ? 0 : 1;
}

struct DemoArgs {
    Common common;
    std::string out_dir = "demo-out";
    std::optional<long> steps;
};

/// Synthetic world -> train -> evaluate against baselines -> mock pipeline.
inline int cmd_demo(const DemoArgs& a, std::ostream& out, std::ostream& err) {
    auto cfg = effective_config(a.common);
    if (a.steps) cfg.train.steps = *a.steps;
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    auto world = synth::make_world(cfg.synth.images, cfg.synth.data.seed);
    const auto m = synth::make_manifest(world, cfg.synth.data);
    cfg.model.feature_dim = synth::feature_dim();

    FineCirModel model(cfg.model);
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
    if (a.common.verbosity > 0) err << "training " << cfg.train.steps << " steps\n";
    const auto summary = train::run_training(model, synth::examples(m, world.store, Split::train), cfg.train, &metrics);
    save_checkpoint((dir / "checkpoint.json").string(), model, summary.temperature, summary.steps);

    const auto opt = cfg.eval.options();
    synth::AttributeVlp vlp;
    nlohmann::ordered_json report;
    report["provenance"] = provenance_header("demo", cfg.to_json(), effective_seed(cfg));
    const auto composed = eval::evaluate_model(model, m, world.store, Split::test, opt);
    out << "finecir\n" << composed.table();
    report["finecir"] = composed.to_json();
    for (auto b : {eval::Baseline::text_only, eval::Baseline::image_only, eval::Baseline::image_plus_text}) {
        const auto r = eval::evaluate_baseline(b, vlp, m, world.store, Split::test, opt);
        out << eval::to_string(b) << "\n" << r.table();
        report[eval::to_string(b)] = r.to_json();
    }

    const auto fx = synth::make_pipeline_fixture();
    const auto prompts = pipeline::PromptRegistry::builtin();
    auto so = store_options(cfg);
    so.clock = review::logical_time();
    fs::remove_all(dir / "review");
    review::ReviewStore store((dir / "review").string(), so);
    pipeline::PipelineContext ctx{fx.world.store, vlp, pipeline::mock_clients(), prompts, store};
    const auto r = pipeline::run_pipeline(fx.manifest, cfg.pipeline, ctx);
    std::ostringstream fm;
    write_manifest(fm, r.manifest);
    write_text(dir / "pipeline_manifest.jsonl", fm.str());
    write_text(dir / "pipeline_ledger.jsonl", r.ledger.to_jsonl());
    report["pipeline"] = {{"finalized", r.ledger.finalized},
                          {"discarded", r.ledger.discarded},
                          {"awaiting_review", r.ledger.awaiting_review}};
    write_text(dir / "report.json", report.dump(2) + "\n");
    out << "pipeline: " << r.ledger.finalized << " finalized, " << r.ledger.discarded << " discarded, "
        << r.ledger.awaiting_review << " awaiting review\n";
    return 0;
}

// ---------------------------------------------------------------- dispatch

inline int error_record(std::ostream& err, const std::string& kind, const std::string& message) {
    err << nlohmann::json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
    return kind == "usage" || kind == "config" ? 2 : 1;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Composed image retrieval lab: scene graphs, training, evaluation, annotation pipeline",
                 "finecir"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    SgArgs sg_args;
    auto* sg = app.add_subcommand("sg", "Scene-graph tools");
    sg->require_subcommand(1);
    auto* sg_parse = sg->add_subcommand("parse", "Parse a modification text into a scene graph");
    sg_parse->add_option("--text", sg_args.text, "Text to parse")->required();
    sg_parse->add_option("--backend", sg_args.backend, "rule | external")->check(CLI::IsMember({"rule", "external"}));
    sg_parse->add_option("--command", sg_args.command, "External parser command (text on stdin, JSON on stdout)");
    sg_parse->add_option("--variant", sg_args.variant, "Name recorded for the external parser");

    std::string stats_manifest;
    auto* stats = app.add_subcommand("stats", "Manifest statistics");
    stats->add_option("--manifest", stats_manifest, "Manifest (.jsonl)")->required()->check(CLI::ExistingFile);

    SynthArgs synth_args;
    auto* syn = app.add_subcommand("synth", "Write the synthetic shapes dataset");
    add_common(syn, synth_args.common);
    syn->add_option("--out-dir", synth_args.out_dir, "Output directory")->required();
    syn->add_option("--images", synth_args.images, "World size");
    syn->add_flag("--fixture", synth_args.fixture, "Write the 20-triplet raw pipeline fixture instead");

    PipelineArgs pl_args;
    auto* pl = app.add_subcommand("pipeline", "Annotation pipeline");
    pl->require_subcommand(1);
    for (const char* g : {"select", "construct", "check", "run"}) {
        auto* s = pl->add_subcommand(g, std::string("Run the ") + g + " stages");
        add_common(s, pl_args.common);
        s->add_option("--manifest", pl_args.manifest, "Input manifest")->required()->check(CLI::ExistingFile);
        s->add_option("--images", pl_args.images, "Feature store (.jsonl)")->required()->check(CLI::ExistingFile);
        s->add_option("--out-dir", pl_args.out_dir, "Directory for manifest, ledger, provenance")->required();
        s->add_option("--clients", pl_args.clients, "mock | live")->check(CLI::IsMember({"mock", "live"}));
        s->add_option("--review-dir", pl_args.review_dir, "Review store directory (overrides review.dir)");
        s->add_option("--prompts", pl_args.prompts_dir, "Prompt directory (default: built-in v1 templates)");
        s->add_option("--vlp", pl_args.vlp, "Embedding backend for sampling and assessment");
        s->callback([&pl_args, g] { pl_args.group = g; });
    }

    TrainArgs tr_args;
    auto* tr = app.add_subcommand("train", "Train a composed retrieval model");
    add_common(tr, tr_args.common);
    tr->add_option("--manifest", tr_args.manifest, "Finalized manifest")->required()->check(CLI::ExistingFile);
    tr->add_option("--images", tr_args.images, "Feature store")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", tr_args.out, "Checkpoint path")->required();
    tr->add_option("--metrics", tr_args.metrics, "Metrics log (.jsonl)");
    tr->add_option("--steps", tr_args.steps, "Override train.steps");
    tr->add_flag("--timing", tr_args.timing, "Record wall-clock milliseconds (breaks byte-identical logs)");

    EvalArgs ev_args;
    auto* ev = app.add_subcommand("eval", "Recall@K evaluation");
    add_common(ev, ev_args.common);
    ev->add_option("--checkpoint", ev_args.checkpoint, "Checkpoint to evaluate")->check(CLI::ExistingFile);
    ev->add_option("--manifest", ev_args.manifest, "Manifest")->required()->check(CLI::ExistingFile);
    ev->add_option("--images", ev_args.images, "Feature store")->required()->check(CLI::ExistingFile);
    ev->add_option("--ks", ev_args.ks, "Comma-separated K values");
    ev->add_option("--subset-ks", ev_args.subset_ks, "Comma-separated subset K values");
    ev->add_option("--split", ev_args.split, "train | test")->check(CLI::IsMember({"train", "test"}));
    ev->add_option("--baseline", ev_args.baseline, "none | text_only | image_only | image_plus_text");
    ev->add_option("--vlp", ev_args.vlp, "Embedding backend for baselines");
    ev->add_option("--out", ev_args.out, "Report path (.json)");

    ServeArgs sv_args;
    auto* sv = app.add_subcommand("serve-review", "Serve the review queue over HTTP");
    add_common(sv, sv_args.common);
    sv->add_option("--review-dir", sv_args.review_dir, "Review store directory");
    sv->add_option("--host", sv_args.host, "Bind address");
    sv->add_option("--port", sv_args.port, "Port (0 picks a free one)");
    sv->add_option("--manifest", sv_args.manifest, "Manifest used to resolve /assets ids")->check(CLI::ExistingFile);
    sv->add_option("--static-dir", sv_args.static_dir, "Frontend build directory served at /");

    DemoArgs demo_args;
    auto* demo = app.add_subcommand("demo", "Synthetic end-to-end run");
    add_common(demo, demo_args.common);
    demo->add_option("--out-dir", demo_args.out_dir, "Output directory");
    demo->add_option("--steps", demo_args.steps, "Override train.steps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << app.help();
        return error_record(err, "usage", e.what());
    }

    try {
        if (sg->parsed()) return cmd_sg_parse(sg_args, out);
        if (stats->parsed()) return cmd_stats(stats_manifest, out);
        if (syn->parsed()) return cmd_synth(synth_args, out);
        if (pl->parsed()) return cmd_pipeline(pl_args, out, err);
        if (tr->parsed()) return cmd_train(tr_args, out, err);
        if (ev->parsed()) return cmd_eval(ev_args, out);
        if (sv->parsed()) return cmd_serve(sv_args, out);
        if (demo->parsed()) return cmd_demo(demo_args, out, err);
    } catch (const UsageError& e) {
        return error_record(err, "usage", e.what());
    } catch (const ConfigError& e) {
        return error_record(err, "config", e.what());
    } catch (const std::exception& e) {
        return error_record(err, "runtime", e.what());
    }
    return error_record(err, "usage", "no subcommand");
}

}  // namespace finecir::cli
