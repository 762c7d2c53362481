#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "finecir/aggregate/gat.hpp"
#include "finecir/compose/encoders.hpp"
#include "finecir/compose/qformer.hpp"

namespace finecir {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Rejects keys of `j` outside `allowed`; `where` names the section.
inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

struct Ablations {
    bool no_sg = false;            // omit the entity segment entirely
    bool no_sc_agg = false;        // mean pooling instead of graph attention
    bool no_entity_guide = false;  // one row: mean of all scene-graph tokens
    bool no_qformer = false;       // MLP composer
    std::string parser = "rule";   // rule | any external variant name

    nlohmann::ordered_json to_json() const {
        return {{"no_sg", no_sg},
                {"no_sc_agg", no_sc_agg},
                {"no_entity_guide", no_entity_guide},
                {"no_qformer", no_qformer},
                {"parser", parser}};
    }
    static Ablations from_json(const nlohmann::json& j) {
        reject_unknown_keys(j, {"no_sg", "no_sc_agg", "no_entity_guide", "no_qformer", "parser"}, "model.ablations");
        Ablations a;
        read_key(j, "no_sg", a.no_sg);
        read_key(j, "no_sc_agg", a.no_sc_agg);
        read_key(j, "no_entity_guide", a.no_entity_guide);
        read_key(j, "no_qformer", a.no_qformer);
        read_key(j, "parser", a.parser);
        return a;
    }
    bool operator==(const Ablations&) const = default;
};

struct ModelConfig {
    // Encoder dimensions: C, D_I, S, D_T.
    int channels = 4;
    int image_dim = 32;
    int seq_len = 16;
    int text_dim = 32;
    int vocab_buckets = 1024;
    int feature_dim = 0;  // F, taken from the feature store when 0
    bool train_encoders = true;
    // Composer: D, k.
    int width = 32;
    int queries = 4;
    int max_entities = 8;
    int composer_layers = 1;
    int composer_heads = 4;
    int ffn_mult = 2;
    int mlp_hidden = 64;
    // Aggregator.
    int gat_layers = 1;
    int gat_heads = 4;
    std::string gat_scoring = "gatv2";
    // External parser command (used when ablations.parser != "rule").
    std::string parser_command;
    Ablations ablations;
    std::uint64_t seed = 0;

    /// Full-size dimensions; impractical on a CPU.
    static ModelConfig full_scale() {
        ModelConfig c;
        c.width = 256;
        c.text_dim = 768;
        c.image_dim = 1408;
        c.channels = 32;
        c.seq_len = 77;
        c.queries = 32;
        c.composer_heads = 8;
        c.gat_heads = 8;
        return c;
    }

    EncoderDims encoder_dims() const { return {channels, image_dim, seq_len, text_dim}; }

    agg::AggregatorConfig aggregator() const {
        agg::AggregatorConfig a;
        a.dim = text_dim;
        a.layers = gat_layers;
        a.heads = gat_heads;
        a.scoring = agg::parse_scoring(gat_scoring);
        return a;
    }

    compose::ComposerConfig composer() const {
        return {width, queries, composer_layers, composer_heads, ffn_mult, text_dim, image_dim, max_entities};
    }

    compose::MlpComposerConfig mlp() const { return {width, mlp_hidden, text_dim, image_dim}; }

    /// Length of the composer's query-side input sequence at full entity
    /// capacity: k + max_entities + S, or k + S without the entity segment.
    int query_sequence_length() const { return queries + (ablations.no_sg ? 0 : max_entities) + seq_len; }

    nlohmann::ordered_json to_json() const {
        return {{"channels", channels},
                {"image_dim", image_dim},
                {"seq_len", seq_len},
                {"text_dim", text_dim},
                {"vocab_buckets", vocab_buckets},
                {"feature_dim", feature_dim},
                {"train_encoders", train_encoders},
                {"width", width},
                {"queries", queries},
                {"max_entities", max_entities},
                {"composer_layers", composer_layers},
                {"composer_heads", composer_heads},
                {"ffn_mult", ffn_mult},
                {"mlp_hidden", mlp_hidden},
                {"gat_layers", gat_layers},
                {"gat_heads", gat_heads},
                {"gat_scoring", gat_scoring},
                {"parser_command", parser_command},
                {"ablations", ablations.to_json()},
                {"seed", seed}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        reject_unknown_keys(j,
                            {"channels", "image_dim", "seq_len", "text_dim", "vocab_buckets", "feature_dim",
                             "train_encoders", "width", "queries", "max_entities", "composer_layers",
                             "composer_heads", "ffn_mult", "mlp_hidden", "gat_layers", "gat_heads", "gat_scoring",
                             "parser_command", "ablations", "seed"},
                            "model");
        ModelConfig c;
        read_key(j, "channels", c.channels);
        read_key(j, "image_dim", c.image_dim);
        read_key(j, "seq_len", c.seq_len);
        read_key(j, "text_dim", c.text_dim);
        read_key(j, "vocab_buckets", c.vocab_buckets);
        read_key(j, "feature_dim", c.feature_dim);
        read_key(j, "train_encoders", c.train_encoders);
        read_key(j, "width", c.width);
        read_key(j, "queries", c.queries);
        read_key(j, "max_entities", c.max_entities);
        read_key(j, "composer_layers", c.composer_layers);
        read_key(j, "composer_heads", c.composer_heads);
        read_key(j, "ffn_mult", c.ffn_mult);
        read_key(j, "mlp_hidden", c.mlp_hidden);
        read_key(j, "gat_layers", c.gat_layers);
        read_key(j, "gat_heads", c.gat_heads);
        read_key(j, "gat_scoring", c.gat_scoring);
        read_key(j, "parser_command", c.parser_command);
        read_key(j, "seed", c.seed);
        if (j.contains("ablations")) c.ablations = Ablations::from_json(j.at("ablations"));
        return c;
    }
};

}  // namespace finecir
