#pragma once

// Individual annotation stages. Each is usable on its own; pipeline.hpp
// chains them into a resumable run.

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "finecir/compose/encoders.hpp"
#include "finecir/core/tokenizer.hpp"
#include "finecir/core/types.hpp"
#include "finecir/eval/baselines.hpp"
#include "finecir/eval/metrics.hpp"
#include "finecir/pipeline/clients.hpp"
#include "finecir/pipeline/prompts.hpp"

namespace finecir::pipeline {

class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline const std::string kPairCheckTemplate = "pair_check@v1";
inline const std::string kFinePromptTemplate = "fine_prompt@v1";
inline const std::string kFashionAddendum = "fashion_addendum@v1";
inline const std::string kRefineTemplate = "refine@v1";
inline const std::string kAssessRefineTemplate = "assess_refine@v1";
inline const std::string kCompressTemplate = "compress@v1";

/// How an image slot is written into prompt text.
inline std::string image_slot(const ImageRef& img) { return "[image " + img.id + "]"; }

// ---------------------------------------------------------------- selection

inline double pair_similarity(const Triplet& t, const eval::VlpBackend& vlp, const FeatureStore& images) {
    const auto a = eval::unit(vlp.embed_image(images.get(t.ref.id)));
    const auto b = eval::unit(vlp.embed_image(images.get(t.target.id)));
    return a.dot(b);
}

/// Splits `pairs` into (retained, discarded) by cosine(ref, target) >= threshold.
inline std::pair<std::vector<Triplet>, std::vector<Triplet>> image_sample(const std::vector<Triplet>& pairs,
                                                                          const eval::VlpBackend& vlp,
                                                                          const FeatureStore& images,
                                                                          double threshold) {
    std::pair<std::vector<Triplet>, std::vector<Triplet>> out;
    for (const auto& t : pairs)
        (pair_similarity(t, vlp, images) >= threshold ? out.first : out.second).push_back(t);
    return out;
}

inline EvalRecord mllm_pair_check(const Triplet& t, const MllmClient& client, const PromptRegistry& prompts) {
    if (client.role() != Role::pair_checker) throw ClientError("mllm_pair_check needs a pair_checker client");
    MllmRequest req;
    req.template_key = kPairCheckTemplate;
    req.prompt = prompts.render(kPairCheckTemplate, {{"img1", image_slot(t.ref)}, {"img2", image_slot(t.target)}});
    req.images = {t.ref, t.target};
    req.inputs = {{"ref_id", t.ref.id}, {"target_id", t.target.id}};
    const auto reply = client.invoke(req);
    EvalRecord e;
    e.answers = parse_yes_no(reply.text);
    e.rationale = reply.text;
    return e;
}

enum class Route { retain, review, discard };

inline std::string to_string(Route r) {
    return r == Route::retain ? "retain" : r == Route::review ? "review" : "discard";
}

inline Route route_by_eval(const EvalRecord& e) {
    const int y = e.yes_count();
    if (y == 3) return Route::retain;
    if (y == 2) return Route::review;
    return Route::discard;
}

// ---------------------------------------------------------------- construction

inline std::string eval_text(const EvalRecord& e) {
    std::string out;
    for (std::size_t i = 0; i < 3; ++i)
        out += (i ? "; " : "") + std::string("Q") + std::to_string(i + 1) + ": " + (e.answers[i] ? "Yes" : "No");
    return out;
}

struct PromptInstance {
    std::string template_key;
    std::string text;
    std::vector<ImageRef> images;
};

inline PromptInstance build_fine_prompt(const Triplet& t, const EvalRecord& e, const PromptRegistry& prompts,
                                        bool fashion = false) {
    PromptInstance p;
    p.template_key = kFinePromptTemplate;
    p.text = prompts.render(kFinePromptTemplate,
                            {{"img1", image_slot(t.ref)}, {"img2", image_slot(t.target)}, {"eval", eval_text(e)}});
    if (fashion) {
        p.text += "\n" + prompts.render(kFashionAddendum, {});
        p.template_key += "+" + kFashionAddendum;
    }
    p.images = {t.ref, t.target};
    return p;
}

struct Generation {
    ModText text;
    std::string branch;  // thorough | conservative
    std::string model;
};

inline Generation generate_finemt(const Triplet& t, const EvalRecord& e, const MllmClient& client,
                                  const PromptRegistry& prompts, const Tokenizer& tok, bool fashion = false) {
    if (client.role() != Role::finemt_generator) throw ClientError("generate_finemt needs a finemt_generator client");
    const int yes = e.yes_count();
    if (yes < 2)
        throw PreconditionError("generate_finemt: triplet " + t.id + " has " + std::to_string(yes) +
                                " yes answers; pairs with fewer than 2 are discarded at routing");
    const auto p = build_fine_prompt(t, e, prompts, fashion);
    MllmRequest req{p.template_key, p.text, p.images,
                    {{"ref_id", t.ref.id},
                     {"target_id", t.target.id},
                     {"yes_count", std::to_string(yes)},
                     {"coarse_text", t.mod_text.grain == Grain::coarse ? t.mod_text.text : ""}}};
    auto reply = client.invoke(req);
    if (reply.text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ClientError("generate_finemt: empty generation for " + t.id);
    Generation g;
    g.text = {reply.text, tok.count(reply.text), Grain::fine};
    g.branch = yes == 3 ? "thorough" : "conservative";
    g.model = reply.model;
    return g;
}

struct Refinement {
    ModText text;
    std::vector<int> removed;  // 1-based sentence numbers
    std::vector<std::string> removed_sentences;
    bool emptied = false;
};

inline Refinement refine_finemt(const Triplet& t, const ModText& finemt, const MllmClient& client,
                                const PromptRegistry& prompts, const Tokenizer& tok) {
    if (client.role() != Role::refiner) throw ClientError("refine_finemt needs a refiner client");
    MllmRequest req{kRefineTemplate,
                    prompts.render(kRefineTemplate, {{"img1", image_slot(t.ref)}, {"text", finemt.text}}),
                    {t.ref},
                    {{"ref_id", t.ref.id}, {"text", finemt.text}}};
    const auto reply = client.invoke(req);
    const auto sentences = split_sentences(finemt.text);
    Refinement r;
    r.removed = parse_remove_list(reply.text, sentences.size());
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (std::binary_search(r.removed.begin(), r.removed.end(), static_cast<int>(i + 1)))
            r.removed_sentences.push_back(sentences[i]);
        else
            kept.push_back(sentences[i]);
    }
    const auto text = r.removed.empty() ? finemt.text : join_sentences(kept);
    r.emptied = kept.empty();
    r.text = {text, tok.count(text), Grain::fine};
    return r;
}

/// Asks the refiner to strip reference-supplied context from an over-specific text.
inline std::string suggest_assess_refinement(const Triplet& t, const MllmClient& client, const PromptRegistry& prompts) {
    MllmRequest req{kAssessRefineTemplate,
                    prompts.render(kAssessRefineTemplate, {{"img1", image_slot(t.ref)},
                                                           {"img2", image_slot(t.target)},
                                                           {"text", t.mod_text.text}}),
                    {t.ref, t.target},
                    {{"ref_id", t.ref.id}, {"target_id", t.target.id}, {"text", t.mod_text.text}}};
    return client.invoke(req).text;
}

// ---------------------------------------------------------------- quality check

struct Assessment {
    bool flag = false;
    int rank = 0;
};

/// Flags when the text alone ranks the target first.
inline Assessment assess_by_text(const Triplet& t, const eval::VlpBackend& vlp, const eval::GalleryIndex& gallery) {
    const int r = eval::rank_of(vlp.embed_text(t.mod_text.text), gallery, t.target.id);
    return {r == 1, r};
}

/// Flags when the reference image alone ranks the target first. The
/// reference itself is left out of the ranking.
inline Assessment assess_by_image(const Triplet& t, const eval::VlpBackend& vlp, const FeatureStore& images,
                                  const eval::GalleryIndex& gallery) {
    std::set<std::string> exclude;
    if (t.ref.id != t.target.id) exclude.insert(t.ref.id);
    const int r = eval::rank_of(vlp.embed_image(images.get(t.ref.id)), gallery, t.target.id, exclude);
    return {r == 1, r};
}

struct Compression {
    ModText text;
    bool compressed = false;    // the client was called
    bool needs_review = false;  // still over the limit
};

inline Compression compress_finemt(const ModText& finemt, const Tokenizer& tok, const MllmClient& client,
                                   const PromptRegistry& prompts, int limit = kDefaultTokenLimit) {
    if (client.role() != Role::compressor) throw ClientError("compress_finemt needs a compressor client");
    Compression c;
    c.text = {finemt.text, tok.count(finemt.text), finemt.grain};
    if (c.text.token_count <= limit) return c;
    MllmRequest req{kCompressTemplate,
                    prompts.render(kCompressTemplate, {{"text", finemt.text}, {"limit", std::to_string(limit)}}),
                    {},
                    {{"text", finemt.text}, {"limit", std::to_string(limit)}}};
    const auto reply = client.invoke(req);
    c.compressed = true;
    c.text = {reply.text, tok.count(reply.text), finemt.grain};
    c.needs_review = c.text.token_count > limit || reply.text.find_first_not_of(" \t\r\n") == std::string::npos;
    return c;
}

}  // namespace finecir::pipeline
