#pragma once

// One config file for every subcommand, one section per module:
//   {"model":{..},"train":{..},"pipeline":{..},"eval":{..},
//    "review":{..},"clients":{..},"synth":{..}}
// Missing sections take defaults; unknown keys anywhere are rejected.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecir/core/hash.hpp"
#include "finecir/eval/evaluate.hpp"
#include "finecir/model/config.hpp"
#include "finecir/pipeline/pipeline.hpp"
#include "finecir/synth/shapes.hpp"
#include "finecir/train/trainer.hpp"

namespace finecir::cli {

inline constexpr const char* kVersion = "0.3.0";

struct EvalSection {
    std::vector<int> ks{1, 5, 10, 50};
    std::vector<int> subset_ks{1, 2, 3};
    bool exclude_reference = true;
    std::string split = "test";

    eval::EvalOptions options() const {
        eval::EvalOptions o;
        o.ks = ks;
        o.subset_ks = subset_ks;
        o.exclude_reference = exclude_reference;
        return o;
    }

    nlohmann::ordered_json to_json() const {
        return {{"ks", ks}, {"subset_ks", subset_ks}, {"exclude_reference", exclude_reference}, {"split", split}};
    }

    static EvalSection from_json(const nlohmann::json& j) {
        reject_unknown_keys(j, {"ks", "subset_ks", "exclude_reference", "split"}, "eval");
        EvalSection e;
        read_key(j, "ks", e.ks);
        read_key(j, "subset_ks", e.subset_ks);
        read_key(j, "exclude_reference", e.exclude_reference);
        read_key(j, "split", e.split);
        e.validate();
        return e;
    }

    void validate() const {
        if (ks.empty()) throw ConfigError("eval.ks must be non-empty");
        for (int k : ks)
            if (k < 1) throw ConfigError("eval.ks entries must be >= 1");
        for (int k : subset_ks)
            if (k < 1) throw ConfigError("eval.subset_ks entries must be >= 1");
        if (!parse_split(split)) throw ConfigError("eval.split must be train or test");
    }
};

struct ReviewSection {
    std::string dir = "review";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
    std::string cors_origin;
    /// Environment variable holding a bearer token; empty disables auth.
    std::string auth_token_env;
    /// "system" timestamps, or "logical" (1, 2, 3, ...) for byte-stable files.
    std::string clock = "system";

    nlohmann::ordered_json to_json() const {
        return {{"dir", dir},
                {"host", host},
                {"port", port},
                {"static_dir", static_dir},
                {"cors_origin", cors_origin},
                {"auth_token_env", auth_token_env},
                {"clock", clock}};
    }

    static ReviewSection from_json(const nlohmann::json& j) {
        reject_unknown_keys(j, {"dir", "host", "port", "static_dir", "cors_origin", "auth_token_env", "clock"},
                            "review");
        ReviewSection r;
        read_key(j, "dir", r.dir);
        read_key(j, "host", r.host);
        read_key(j, "port", r.port);
        read_key(j, "static_dir", r.static_dir);
        read_key(j, "cors_origin", r.cors_origin);
        read_key(j, "auth_token_env", r.auth_token_env);
        read_key(j, "clock", r.clock);
        if (r.port < 0 || r.port > 65535) throw ConfigError("review.port out of range");
        if (r.clock != "system" && r.clock != "logical") throw ConfigError("review.clock must be system or logical");
        return r;
    }
};

/// Live endpoint settings; each role may name its own model.
struct ClientsSection {
    std::string endpoint;
    std::string path = "/v1/chat/completions";
    std::string api_key_env = "FINECIR_LLM_API_KEY";
    std::string pair_checker_model;
    std::string generator_model;
    std::string refiner_model;
    std::string compressor_model;
    int timeout_s = 120;

    nlohmann::ordered_json to_json() const {
        return {{"endpoint", endpoint},
                {"path", path},
                {"api_key_env", api_key_env},
                {"pair_checker_model", pair_checker_model},
                {"generator_model", generator_model},
                {"refiner_model", refiner_model},
                {"compressor_model", compressor_model},
                {"timeout_s", timeout_s}};
    }

    static ClientsSection from_json(const nlohmann::json& j) {
        reject_unknown_keys(j,
                            {"endpoint", "path", "api_key_env", "pair_checker_model", "generator_model",
                             "refiner_model", "compressor_model", "timeout_s"},
                            "clients");
        ClientsSection c;
        read_key(j, "endpoint", c.endpoint);
        read_key(j, "path", c.path);
        read_key(j, "api_key_env", c.api_key_env);
        read_key(j, "pair_checker_model", c.pair_checker_model);
        read_key(j, "generator_model", c.generator_model);
        read_key(j, "refiner_model", c.refiner_model);
        read_key(j, "compressor_model", c.compressor_model);
        read_key(j, "timeout_s", c.timeout_s);
        return c;
    }
};

struct SynthSection {
    std::size_t images = 500;
    synth::SynthOptions data;

    nlohmann::ordered_json to_json() const {
        return {{"images", images},
                {"train", data.train},
                {"test", data.test},
                {"max_changes", data.max_changes},
                {"subset_size", data.subset_size},
                {"seed", data.seed}};
    }

    static SynthSection from_json(const nlohmann::json& j) {
        reject_unknown_keys(j, {"images", "train", "test", "max_changes", "subset_size", "seed"}, "synth");
        SynthSection s;
        read_key(j, "images", s.images);
        read_key(j, "train", s.data.train);
        read_key(j, "test", s.data.test);
        read_key(j, "max_changes", s.data.max_changes);
        read_key(j, "subset_size", s.data.subset_size);
        read_key(j, "seed", s.data.seed);
        if (s.data.max_changes < 1) throw ConfigError("synth.max_changes must be >= 1");
        return s;
    }
};

struct RunConfig {
    ModelConfig model;
    train::TrainConfig train;
    pipeline::PipelineConfig pipeline;
    EvalSection eval;
    ReviewSection review;
    ClientsSection clients;
    SynthSection synth;

    /// Overrides every module seed.
    void set_seed(std::uint64_t s) {
        model.seed = s;
        train.seed = s;
        pipeline.seed = s;
        synth.data.seed = s;
    }

    nlohmann::ordered_json to_json() const {
        return {{"model", model.to_json()},         {"train", train.to_json()},   {"pipeline", pipeline.to_json()},
                {"eval", eval.to_json()},           {"review", review.to_json()}, {"clients", clients.to_json()},
                {"synth", synth.to_json()}};
    }

    static RunConfig from_json(const nlohmann::json& j) {
        reject_unknown_keys(j, {"model", "train", "pipeline", "eval", "review", "clients", "synth"}, "config");
        RunConfig c;
        if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
        if (j.contains("train")) c.train = train::TrainConfig::from_json(j.at("train"));
        if (j.contains("pipeline")) c.pipeline = pipeline::PipelineConfig::from_json(j.at("pipeline"));
        if (j.contains("eval")) c.eval = EvalSection::from_json(j.at("eval"));
        if (j.contains("review")) c.review = ReviewSection::from_json(j.at("review"));
        if (j.contains("clients")) c.clients = ClientsSection::from_json(j.at("clients"));
        if (j.contains("synth")) c.synth = SynthSection::from_json(j.at("synth"));
        return c;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + ": " + e.what());
        }
        try {
            return from_json(j);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }
};

/// fnv1a64 of the canonical (sorted-key) JSON, as 16 hex digits.
inline std::string config_hash(const nlohmann::ordered_json& effective) {
    const auto canonical = nlohmann::json(effective).dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical)));
    return buf;
}

/// Header written next to (or into) every artifact.
inline nlohmann::ordered_json provenance_header(const std::string& command, const nlohmann::ordered_json& effective,
                                                std::uint64_t seed) {
    return {{"tool", "finecir"},
            {"version", kVersion},
            {"command", command},
            {"config_hash", config_hash(effective)},
            {"seed", seed},
            {"config", effective}};
}

}  // namespace finecir::cli
