#pragma once

// The full retrieval model: text parsing into a scene graph, subject-centric
// aggregation into entity tokens, and entity-guided composition against the
// reference image's visual feature. Ablation switches in ModelConfig swap or
// remove individual pieces.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "finecir/aggregate/gat.hpp"
#include "finecir/compose/encoders.hpp"
#include "finecir/compose/qformer.hpp"
#include "finecir/model/config.hpp"
#include "finecir/nn/params.hpp"
#include "finecir/sgparse/external_parser.hpp"
#include "finecir/sgparse/rule_parser.hpp"
#include "finecir/sgparse/subject_centric.hpp"

namespace finecir {

inline std::shared_ptr<const sg::ParserBackend> make_parser(const ModelConfig& cfg) {
    if (cfg.ablations.parser == "rule") return std::make_shared<sg::RuleParser>();
    if (cfg.parser_command.empty())
        throw ConfigError("parser '" + cfg.ablations.parser + "' needs model.parser_command");
    return std::make_shared<sg::ExternalParser>(cfg.parser_command, cfg.ablations.parser);
}

/// Everything computed on the query side, for inspection and tests.
struct QueryTrace {
    sg::SceneGraph graph;
    agg::EntityTokens entities;
    compose::ComposeResult result;
};

class FineCirModel {
public:
    explicit FineCirModel(ModelConfig cfg, std::shared_ptr<const sg::ParserBackend> parser = nullptr)
        : cfg_(std::move(cfg)), parser_(parser ? std::move(parser) : make_parser(cfg_)) {
        if (cfg_.feature_dim <= 0) throw ConfigError("model.feature_dim must be positive");
        nn::Rng rng(cfg_.seed);
        encoder_ = std::make_unique<ToyEncoder>(
            ToyEncoderConfig{cfg_.encoder_dims(), cfg_.vocab_buckets, cfg_.feature_dim, cfg_.train_encoders}, params_,
            rng);
        if (!cfg_.ablations.no_sg && !cfg_.ablations.no_sc_agg && !cfg_.ablations.no_entity_guide)
            aggregator_ = std::make_unique<agg::GatAggregator>(cfg_.aggregator(), params_, rng);
        if (cfg_.ablations.no_qformer)
            mlp_ = std::make_unique<compose::MlpComposer>(cfg_.mlp(), params_, rng);
        else
            qformer_ = std::make_unique<compose::QFormer>(cfg_.composer(), params_, rng);
    }

    FineCirModel(const FineCirModel&) = delete;
    FineCirModel& operator=(const FineCirModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const EncoderBackend& encoder() const { return *encoder_; }
    const sg::ParserBackend& parser() const { return *parser_; }
    const agg::GatAggregator* aggregator() const { return aggregator_.get(); }
    const compose::QFormer* qformer() const { return qformer_.get(); }

    /// Scene graph of `text`, memoized (the rule parser is deterministic).
    sg::SceneGraph parse(const std::string& text) const {
        std::lock_guard<std::mutex> lock(cache_mu_);
        auto it = cache_.find(text);
        if (it != cache_.end()) return it->second;
        auto g = parser_->parse(text);
        g.validate();
        return cache_.emplace(text, std::move(g)).first->second;
    }

    /// Entity guidance for `text`, honoring the ablation switches.
    agg::EntityTokens entity_tokens(const sg::SceneGraph& graph, const std::string& text) const {
        const auto& ab = cfg_.ablations;
        auto table = sg::embed_graph(graph, *encoder_);
        auto sentence = encoder_->summary(text);
        if (ab.no_entity_guide) {
            agg::EntityTokens out;
            auto all = table.all();
            out.rows = all.empty() ? sentence : nn::mean_rows(nn::concat_rows(all));
            out.subject_entity = {-1};
            return out;
        }
        auto sc = sg::to_subject_centric(graph, table, sentence);
        if (ab.no_sc_agg) return agg::aggregate_meanpool(sc, cfg_.text_dim);
        return aggregator_->aggregate(sc);
    }

    QueryTrace trace_query(const ImageInput& reference, const std::string& text) const {
        QueryTrace t;
        auto visual = encoder_->encode_image(reference);
        auto feature = encoder_->encode_text(text);
        if (!cfg_.ablations.no_sg) {
            t.graph = parse(text);
            t.entities = entity_tokens(t.graph, text);
        } else {
            t.entities.rows = nn::constant(nn::Mat(0, cfg_.text_dim));
        }
        if (mlp_) {
            t.result.token = mlp_->compose(t.entities, feature, visual);
            t.result.entity_rows = t.entities.count();
            return t;
        }
        t.result = qformer_->compose(cfg_.ablations.no_sg ? nullptr : &t.entities, &feature, visual);
        return t;
    }

    /// Composed query token (1, D).
    nn::Var compose_query(const ImageInput& reference, const std::string& text) const {
        return trace_query(reference, text).result.token;
    }

    /// Target token (1, D).
    nn::Var encode_target(const ImageInput& target) const {
        auto visual = encoder_->encode_image(target);
        return mlp_ ? mlp_->encode_target(visual) : qformer_->encode_target(visual);
    }

    /// Architecture summary recorded in training logs.
    nlohmann::ordered_json signature() const {
        nlohmann::ordered_json j;
        j["composer"] = mlp_ ? "mlp" : "qformer";
        j["aggregation"] = cfg_.ablations.no_sg             ? "none"
                           : cfg_.ablations.no_entity_guide ? "graph_mean"
                           : cfg_.ablations.no_sc_agg       ? "meanpool"
                                                            : agg::to_string(cfg_.aggregator().scoring);
        j["entity_segment"] = !cfg_.ablations.no_sg;
        j["parser"] = parser_->name();
        j["queries"] = cfg_.queries;
        j["max_entities"] = cfg_.ablations.no_sg ? 0 : cfg_.max_entities;
        j["seq_len"] = cfg_.seq_len;
        if (mlp_)
            j["query_sequence_length"] = nullptr;
        else
            j["query_sequence_length"] = cfg_.query_sequence_length();
        j["width"] = cfg_.width;
        j["parameters"] = params_.scalar_count();
        return j;
    }

private:
    ModelConfig cfg_;
    std::shared_ptr<const sg::ParserBackend> parser_;
    nn::ParamStore params_;
    std::unique_ptr<ToyEncoder> encoder_;
    std::unique_ptr<agg::GatAggregator> aggregator_;
    std::unique_ptr<compose::QFormer> qformer_;
    std::unique_ptr<compose::MlpComposer> mlp_;
    mutable std::mutex cache_mu_;
    mutable std::map<std::string, sg::SceneGraph> cache_;
};

}  // namespace finecir
