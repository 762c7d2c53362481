#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "finecir/core/types.hpp"
#include "finecir/eval/baselines.hpp"
#include "finecir/eval/metrics.hpp"
#include "finecir/model/finecir_model.hpp"

namespace finecir::eval {

struct EvalOptions {
    std::vector<int> ks{1, 5, 10, 50};
    std::vector<int> subset_ks{1, 2, 3};
    /// Candidate ids; empty means every image in the feature store.
    std::vector<std::string> gallery;
    /// Leave the query's own reference image out of its ranking.
    bool exclude_reference = true;
};

inline Row to_row(const nn::Var& v) { return v.value().row(0); }

/// Rank outcomes for every finalized triplet of `split`, ranking with
/// `query_fn` against `index`.
inline MetricReport evaluate_queries(const DatasetManifest& m, Split split, const GalleryIndex& index,
                                     const std::function<Row(const Triplet&)>& query_fn, const EvalOptions& opt) {
    std::vector<QueryOutcome> outcomes;
    for (const auto& t : m.triplets) {
        if (t.split() != split || t.status != Status::finalized) continue;
        const Row q = query_fn(t);
        std::set<std::string> exclude;
        if (opt.exclude_reference && t.ref.id != t.target.id) exclude.insert(t.ref.id);
        QueryOutcome o;
        o.rank = rank_of(q, index, t.target.id, exclude);
        if (!t.subset_ids.empty()) o.subset_rank = subset_rank(q, index, t.subset_ids, t.target.id);
        outcomes.push_back(o);
    }
    return summarize(outcomes, opt.ks, opt.subset_ks);
}

inline std::vector<std::string> gallery_ids(const FeatureStore& store, const EvalOptions& opt) {
    return opt.gallery.empty() ? store.ids() : opt.gallery;
}

inline MetricReport evaluate_model(const FineCirModel& model, const DatasetManifest& m, const FeatureStore& store,
                                   Split split, const EvalOptions& opt = {}) {
    nn::NoGradGuard guard;
    GalleryIndex index;
    for (const auto& id : gallery_ids(store, opt)) index.add(id, to_row(model.encode_target(store.get(id))));
    return evaluate_queries(
        m, split, index,
        [&](const Triplet& t) { return to_row(model.compose_query(store.get(t.ref.id), t.mod_text.text)); }, opt);
}

enum class Baseline { text_only, image_only, image_plus_text };

inline std::string to_string(Baseline b) {
    switch (b) {
        case Baseline::text_only: return "text_only";
        case Baseline::image_only: return "image_only";
        default: return "image_plus_text";
    }
}

inline MetricReport evaluate_baseline(Baseline kind, const VlpBackend& vlp, const DatasetManifest& m,
                                      const FeatureStore& store, Split split, const EvalOptions& opt = {}) {
    const auto index = build_image_index(vlp, store, gallery_ids(store, opt));
    return evaluate_queries(
        m, split, index,
        [&](const Triplet& t) -> Row {
            switch (kind) {
                case Baseline::text_only: return vlp.embed_text(t.mod_text.text);
                case Baseline::image_only: return vlp.embed_image(store.get(t.ref.id));
                default: return fuse_image_text(vlp.embed_image(store.get(t.ref.id)), vlp.embed_text(t.mod_text.text));
            }
        },
        opt);
}

}  // namespace finecir::eval
