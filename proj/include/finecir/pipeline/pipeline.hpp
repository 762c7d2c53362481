#pragma once

// Resumable end-to-end annotation run. Each triplet advances through
//   image_sample -> pair_check -> generate -> refine -> assess_text ->
//   assess_image -> compress
// until it is finalized, discarded, or parked on an open review item.
// Rerunning on the output manifest (or on the original input) picks up
// review verdicts recorded in the store and continues from there.

#include <algorithm>
#include <charconv>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecir/core/manifest.hpp"
#include "finecir/model/config.hpp"
#include "finecir/pipeline/stages.hpp"
#include "finecir/review/store.hpp"

namespace finecir::pipeline {

inline const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> s{"image_sample", "pair_check",   "generate", "refine",
                                            "assess_text",  "assess_image", "compress"};
    return s;
}

/// CLI stage groups.
inline std::set<std::string> stage_group(const std::string& g) {
    if (g == "select") return {"image_sample", "pair_check"};
    if (g == "construct") return {"generate", "refine"};
    if (g == "check") return {"assess_text", "assess_image", "compress"};
    if (g == "run") return {stage_order().begin(), stage_order().end()};
    throw std::invalid_argument("unknown pipeline stage group '" + g + "'");
}

struct PipelineConfig {
    double similarity_threshold = 0.5;
    int token_limit = kDefaultTokenLimit;
    bool fashion = false;
    /// Candidates for the assess stages: "split_targets" or "all_images".
    std::string assess_gallery = "split_targets";
    /// Stages switched off pass triplets through unchanged.
    std::set<std::string> disabled;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(similarity_threshold >= 0.0 && similarity_threshold <= 1.0))
            throw ConfigError("pipeline.similarity_threshold must lie in [0,1]");
        if (token_limit < 1) throw ConfigError("pipeline.token_limit must be >= 1");
        if (assess_gallery != "split_targets" && assess_gallery != "all_images")
            throw ConfigError("pipeline.assess_gallery must be split_targets or all_images");
        for (const auto& s : disabled)
            if (std::find(stage_order().begin(), stage_order().end(), s) == stage_order().end())
                throw ConfigError("pipeline.disabled names unknown stage '" + s + "'");
        if (disabled.count("pair_check") || disabled.count("generate"))
            throw ConfigError("pair_check and generate cannot be disabled");
    }

    nlohmann::ordered_json to_json() const {
        return {{"similarity_threshold", similarity_threshold},
                {"token_limit", token_limit},
                {"fashion", fashion},
                {"assess_gallery", assess_gallery},
                {"disabled", disabled},
                {"seed", seed}};
    }

    static PipelineConfig from_json(const nlohmann::json& j) {
        reject_unknown_keys(j, {"similarity_threshold", "token_limit", "fashion", "assess_gallery", "disabled", "seed"},
                            "pipeline");
        PipelineConfig c;
        read_key(j, "similarity_threshold", c.similarity_threshold);
        read_key(j, "token_limit", c.token_limit);
        read_key(j, "fashion", c.fashion);
        read_key(j, "assess_gallery", c.assess_gallery);
        read_key(j, "disabled", c.disabled);
        read_key(j, "seed", c.seed);
        c.validate();
        return c;
    }
};

struct Disposition {
    std::string triplet_id;
    std::string outcome;  // retained | review | discarded
    std::string rule;
};

struct StageRecord {
    std::string stage;
    std::size_t in = 0, retained = 0, review = 0, discarded = 0;
    std::vector<Disposition> dispositions;

    bool balanced() const { return in == retained + review + discarded; }

    void add(const std::string& id, const std::string& outcome, const std::string& rule) {
        ++in;
        if (outcome == "retained") ++retained;
        else if (outcome == "review") ++review;
        else ++discarded;
        dispositions.push_back({id, outcome, rule});
    }
};

struct StageLedger {
    nlohmann::ordered_json config;
    std::vector<StageRecord> stages;
    std::size_t finalized = 0, discarded = 0, awaiting_review = 0, in_progress = 0;

    bool balanced() const {
        return std::all_of(stages.begin(), stages.end(), [](const auto& s) { return s.balanced(); });
    }

    const StageRecord& stage(const std::string& name) const {
        for (const auto& s : stages)
            if (s.stage == name) return s;
        throw std::out_of_range("no ledger stage " + name);
    }

    /// One record per line: config, each stage, totals.
    std::string to_jsonl() const {
        std::string out = nlohmann::ordered_json{{"record", "config"}, {"config", config}}.dump() + "\n";
        for (const auto& s : stages) {
            nlohmann::ordered_json j{{"record", "stage"}, {"stage", s.stage},       {"in", s.in},
                                     {"retained", s.retained}, {"review", s.review}, {"discarded", s.discarded}};
            auto d = nlohmann::ordered_json::array();
            for (const auto& x : s.dispositions)
                d.push_back({{"triplet_id", x.triplet_id}, {"outcome", x.outcome}, {"rule", x.rule}});
            j["dispositions"] = d;
            out += j.dump() + "\n";
        }
        out += nlohmann::ordered_json{{"record", "totals"},
                                      {"finalized", finalized},
                                      {"discarded", discarded},
                                      {"awaiting_review", awaiting_review},
                                      {"in_progress", in_progress}}
                   .dump() +
               "\n";
        return out;
    }
};

struct PipelineContext {
    const FeatureStore& images;
    const eval::VlpBackend& vlp;
    ClientSet clients;
    const PromptRegistry& prompts;
    review::ReviewStore& store;
    std::shared_ptr<const Tokenizer> tokenizer = default_tokenizer();
};

struct PipelineResult {
    DatasetManifest manifest;
    StageLedger ledger;
};

/// Raised when a stage fails; `partial` holds every triplet's state at the
/// point of failure and can be fed back in to resume.
class PipelineHalted : public std::runtime_error {
public:
    PipelineHalted(const std::string& what, PipelineResult partial)
        : std::runtime_error(what), partial(std::move(partial)) {}
    PipelineResult partial;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline nlohmann::ordered_json image_json(const ImageRef& r) { return {{"id", r.id}, {"uri", r.uri}}; }

inline nlohmann::ordered_json action(const std::string& verdict, const std::string& label) {
    return {{"verdict", verdict}, {"label", label}};
}

inline nlohmann::ordered_json base_payload(const Triplet& t) {
    nlohmann::ordered_json p;
    p["reference"] = image_json(t.ref);
    p["target"] = image_json(t.target);
    p["text"] = t.mod_text.text;
    p["token_count"] = t.mod_text.token_count;
    if (t.eval) p["answers"] = t.eval->answers;
    return p;
}

class Runner {
public:
    Runner(const PipelineConfig& cfg, PipelineContext& ctx) : cfg_(cfg), ctx_(ctx), tok_(*ctx.tokenizer) {}

    /// Returns the verdict of a decided item, nullopt while open; enqueues
    /// the item when none exists.
    std::optional<review::Decision> review_gate(Triplet& t, const std::string& stage,
                                                const nlohmann::ordered_json& payload) {
        auto item = ctx_.store.find(stage, t.id);
        if (!item) {
            ctx_.store.enqueue(stage, t.id, payload);
            t.provenance["awaiting_review"] = review::item_id(stage, t.id);
            return std::nullopt;
        }
        if (item->state == review::ItemState::open) {
            t.provenance["awaiting_review"] = item->id;
            return std::nullopt;
        }
        t.provenance.erase("awaiting_review");
        t.provenance["review." + stage] = review::to_string(item->decision->verdict);
        return item->decision;
    }

    void set_text(Triplet& t, const std::string& text) { t.mod_text = {text, tok_.count(text), Grain::fine}; }

    void image_sample(Triplet& t, StageRecord& rec) {
        if (cfg_.disabled.count("image_sample")) {
            t.provenance["sample_similarity"] = "skipped";
            t.advance(Status::sampled);
            rec.add(t.id, "retained", "disabled");
            return;
        }
        const double s = pair_similarity(t, ctx_.vlp, ctx_.images);
        t.provenance["sample_similarity"] = fmt_double(s);
        if (s >= cfg_.similarity_threshold) {
            t.advance(Status::sampled);
            rec.add(t.id, "retained", "similarity>=threshold");
        } else {
            t.discard("image_sample", "similarity<threshold");
            rec.add(t.id, "discarded", "similarity<threshold");
        }
    }

    void pair_check(Triplet& t, StageRecord& rec) {
        if (!t.eval) {
            t.eval = mllm_pair_check(t, *ctx_.clients.pair_checker, ctx_.prompts);
            t.provenance["pair_checker"] = ctx_.clients.pair_checker->name();
        }
        const auto route = route_by_eval(*t.eval);
        t.provenance["eval_route"] = to_string(route);
        if (route == Route::retain) {
            t.advance(Status::selected);
            rec.add(t.id, "retained", "yes_count=3");
        } else if (route == Route::discard) {
            t.discard("pair_check", "yes_count<=1");
            rec.add(t.id, "discarded", "yes_count<=1");
        } else {
            auto p = base_payload(t);
            p["rationale"] = t.eval->rationale;
            p["suggested_actions"] = {action("retain", "keep the pair"), action("discard", "drop the pair")};
            auto d = review_gate(t, "pair_check", p);
            if (!d) return rec.add(t.id, "review", "yes_count=2");
            if (d->verdict == review::Verdict::retain) {
                t.advance(Status::selected);
                rec.add(t.id, "retained", "review:retain");
            } else {
                t.discard("pair_check", "review:discard");
                rec.add(t.id, "discarded", "review:discard");
            }
        }
    }

    void generate(Triplet& t, StageRecord& rec) {
        const auto g = generate_finemt(t, *t.eval, *ctx_.clients.generator, ctx_.prompts, tok_, cfg_.fashion);
        if (t.mod_text.grain == Grain::coarse) t.provenance["coarse_text"] = t.mod_text.text;
        t.mod_text = g.text;
        t.provenance["generation_branch"] = g.branch;
        t.provenance["generator"] = g.model;
        t.advance(Status::generated);
        rec.add(t.id, "retained", g.branch);
    }

    void refine(Triplet& t, StageRecord& rec) {
        if (cfg_.disabled.count("refine")) {
            t.advance(Status::refined);
            return rec.add(t.id, "retained", "disabled");
        }
        if (!ctx_.store.find("refine", t.id)) {
            const auto r = refine_finemt(t, t.mod_text, *ctx_.clients.refiner, ctx_.prompts, tok_);
            std::string removed;
            for (int i : r.removed) removed += (removed.empty() ? "" : ",") + std::to_string(i);
            t.provenance["refine_removed"] = removed.empty() ? "none" : removed;
            if (!r.emptied) {
                t.mod_text = r.text;
                t.advance(Status::refined);
                return rec.add(t.id, "retained", r.removed.empty() ? "unchanged" : "sentences_removed");
            }
            auto p = base_payload(t);
            p["removed_sentences"] = r.removed_sentences;
            p["suggested_actions"] = {action("edit", "rewrite the text"), action("discard", "drop the triplet")};
            review_gate(t, "refine", p);
            return rec.add(t.id, "review", "refinement_emptied_text");
        }
        auto d = review_gate(t, "refine", {});
        if (!d) return rec.add(t.id, "review", "refinement_emptied_text");
        if (d->verdict == review::Verdict::edit) {
            set_text(t, *d->edited_text);
            t.advance(Status::refined);
            rec.add(t.id, "retained", "review:edit");
        } else {
            t.discard("refine", "review:discard");
            rec.add(t.id, "discarded", "review:discard");
        }
    }

    /// Shared flow for both assess stages; `done` marks completion in provenance.
    void assess(Triplet& t, StageRecord& rec, const std::string& stage, const eval::GalleryIndex& gallery) {
        const bool by_text = stage == "assess_text";
        auto finish = [&](const std::string& how) {
            t.provenance[stage] = how;
            if (!by_text) t.advance(Status::assessed);
        };
        if (cfg_.disabled.count(stage)) {
            finish("skipped");
            return rec.add(t.id, "retained", "disabled");
        }
        // The rank is recorded on every pass so a resumed run matches a fresh one.
        const auto a = by_text ? assess_by_text(t, ctx_.vlp, gallery)
                               : assess_by_image(t, ctx_.vlp, ctx_.images, gallery);
        t.provenance[stage + "_rank"] = std::to_string(a.rank);
        if (!ctx_.store.find(stage, t.id)) {
            if (!a.flag) {
                finish("pass");
                return rec.add(t.id, "retained", "rank>1");
            }
            auto p = base_payload(t);
            p["rank"] = a.rank;
            if (by_text) {
                const auto suggestion = suggest_assess_refinement(t, *ctx_.clients.refiner, ctx_.prompts);
                p["suggested_text"] = suggestion;
                p["suggested_actions"] = {
                    nlohmann::ordered_json{{"verdict", "edit"}, {"label", "refine overly detailed text"},
                                           {"text", suggestion}},
                    action("discard", "excessive difference between images")};
            } else {
                p["suggested_actions"] = {action("retain", "keep the triplet"), action("discard", "drop the triplet")};
            }
            review_gate(t, stage, p);
            return rec.add(t.id, "review", "rank=1");
        }
        auto d = review_gate(t, stage, {});
        if (!d) return rec.add(t.id, "review", "rank=1");
        switch (d->verdict) {
            case review::Verdict::retain:
                finish("retain");
                return rec.add(t.id, "retained", "review:retain");
            case review::Verdict::edit:
                set_text(t, *d->edited_text);
                finish("edit");
                return rec.add(t.id, "retained", "review:edit");
            default:
                t.discard(stage, "review:discard");
                return rec.add(t.id, "discarded", "review:discard");
        }
    }

    void compress(Triplet& t, StageRecord& rec) {
        const int limit = cfg_.token_limit;
        if (!ctx_.store.find("compress", t.id)) {
            const int n = tok_.count(t.mod_text.text);
            if (n <= limit) {
                t.mod_text.token_count = n;
                t.provenance["compress"] = "unchanged";
                t.advance(Status::finalized);
                return rec.add(t.id, "retained", "within_limit");
            }
            if (cfg_.disabled.count("compress")) {
                t.discard("compress", "over_limit_compress_disabled");
                return rec.add(t.id, "discarded", "over_limit_compress_disabled");
            }
            const auto c = compress_finemt(t.mod_text, tok_, *ctx_.clients.compressor, ctx_.prompts, limit);
            if (!c.needs_review) {
                t.provenance["compress"] = "compressed";
                t.provenance["uncompressed_text"] = t.mod_text.text;
                t.mod_text = c.text;
                t.advance(Status::finalized);
                return rec.add(t.id, "retained", "compressed");
            }
            auto p = base_payload(t);
            p["compressed_text"] = c.text.text;
            p["compressed_token_count"] = c.text.token_count;
            p["limit"] = limit;
            p["suggested_actions"] = {action("edit", "shorten to the token limit"), action("discard", "drop the triplet")};
            review_gate(t, "compress", p);
            return rec.add(t.id, "review", "over_limit_after_compression");
        }
        auto d = review_gate(t, "compress", {});
        if (!d) return rec.add(t.id, "review", "over_limit_after_compression");
        if (d->verdict == review::Verdict::edit) {
            set_text(t, *d->edited_text);
            if (t.mod_text.token_count > limit) {
                t.discard("compress", "review_edit_over_limit");
                return rec.add(t.id, "discarded", "review_edit_over_limit");
            }
            t.provenance["compress"] = "review:edit";
            t.advance(Status::finalized);
            rec.add(t.id, "retained", "review:edit");
        } else {
            t.discard("compress", "review:discard");
            rec.add(t.id, "discarded", "review:discard");
        }
    }

private:
    const PipelineConfig& cfg_;
    PipelineContext& ctx_;
    const Tokenizer& tok_;
};

inline bool applies(const std::string& stage, const Triplet& t) {
    if (stage == "image_sample") return t.status == Status::raw;
    if (stage == "pair_check") return t.status == Status::sampled;
    if (stage == "generate") return t.status == Status::selected;
    if (stage == "refine") return t.status == Status::generated;
    if (stage == "assess_text") return t.status == Status::refined && !t.provenance.count("assess_text");
    if (stage == "assess_image") return t.status == Status::refined && t.provenance.count("assess_text");
    if (stage == "compress") return t.status == Status::assessed;
    return false;
}

/// Targets of every triplet in `split`, sorted and deduplicated.
inline eval::GalleryIndex assess_gallery(const DatasetManifest& m, Split split, const PipelineConfig& cfg,
                                         const PipelineContext& ctx) {
    std::vector<std::string> ids;
    if (cfg.assess_gallery == "all_images") {
        ids = ctx.images.ids();
    } else {
        for (const auto& t : m.triplets)
            if (t.split() == split) ids.push_back(t.target.id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return eval::build_image_index(ctx.vlp, ctx.images, ids);
}

}  // namespace detail

/// Runs the stages in `only` (all when empty) over `input`.
inline PipelineResult run_pipeline(const DatasetManifest& input, const PipelineConfig& cfg, PipelineContext& ctx,
                                   const std::set<std::string>& only = {}) {
    cfg.validate();
    if (!ctx.clients.pair_checker || !ctx.clients.generator || !ctx.clients.refiner || !ctx.clients.compressor)
        throw ClientError("run_pipeline: all four client roles must be bound");
    PipelineResult res;
    res.manifest.name = input.name;
    res.manifest.triplets = input.triplets;
    std::sort(res.manifest.triplets.begin(), res.manifest.triplets.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    auto& ts = res.manifest.triplets;
    res.ledger.config = cfg.to_json();
    res.ledger.config["clients"] = {{"pair_checker", ctx.clients.pair_checker->name()},
                                    {"generator", ctx.clients.generator->name()},
                                    {"refiner", ctx.clients.refiner->name()},
                                    {"compressor", ctx.clients.compressor->name()}};
    res.ledger.config["vlp"] = ctx.vlp.name();
    res.ledger.config["tokenizer"] = ctx.tokenizer->name();

    std::map<Split, eval::GalleryIndex> galleries;
    auto gallery = [&](Split s) -> const eval::GalleryIndex& {
        auto it = galleries.find(s);
        if (it == galleries.end()) it = galleries.emplace(s, detail::assess_gallery(input, s, cfg, ctx)).first;
        return it->second;
    };

    detail::Runner run(cfg, ctx);
    for (const auto& stage : stage_order()) {
        if (!only.empty() && !only.count(stage)) continue;
        StageRecord rec;
        rec.stage = stage;
        for (auto& t : ts) {
            if (!detail::applies(stage, t)) continue;
            try {
                if (stage == "image_sample") run.image_sample(t, rec);
                else if (stage == "pair_check") run.pair_check(t, rec);
                else if (stage == "generate") run.generate(t, rec);
                else if (stage == "refine") run.refine(t, rec);
                else if (stage == "assess_text" || stage == "assess_image") run.assess(t, rec, stage, gallery(t.split()));
                else run.compress(t, rec);
            } catch (const std::exception& e) {
                res.ledger.stages.push_back(rec);
                res.manifest.recount();
                throw PipelineHalted("stage " + stage + " failed on triplet " + t.id + ": " + e.what(), res);
            }
        }
        if (!rec.balanced()) throw std::logic_error("ledger imbalance at stage " + stage);
        res.ledger.stages.push_back(std::move(rec));
    }
    for (const auto& t : ts) {
        if (t.status == Status::finalized) ++res.ledger.finalized;
        else if (t.status == Status::discarded) ++res.ledger.discarded;
        else if (t.provenance.count("awaiting_review")) ++res.ledger.awaiting_review;
        else ++res.ledger.in_progress;
    }
    res.manifest.recount();
    return res;
}

}  // namespace finecir::pipeline
