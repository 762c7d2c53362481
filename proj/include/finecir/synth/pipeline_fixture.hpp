#pragma once

// 20-triplet annotation fixture for the mock pipeline. Pairs are picked from
// a shapes world so that the mock pair checker's hash rule yields a known
// routing split, and two pairs are too dissimilar to survive sampling.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "finecir/core/tokenizer.hpp"
#include "finecir/pipeline/clients.hpp"
#include "finecir/synth/shapes.hpp"

namespace finecir::synth {

struct PipelineFixtureCounts {
    std::size_t total = 20;
    std::size_t sample_discard = 2;  // 3+ attribute changes, cosine <= 0.4
    std::size_t retain = 11;         // 3 yes
    std::size_t review = 5;          // 2 yes
    std::size_t discard = 2;         // 0 or 1 yes
};

struct PipelineFixture {
    World world;
    DatasetManifest manifest;
    PipelineFixtureCounts counts;
};

/// Raw triplets with coarse texts naming only the first changed attribute.
/// The 3-yes picks cycle through the four mock generator variants so that
/// refinement and compression both see work.
inline PipelineFixture make_pipeline_fixture(std::uint64_t seed = 7, std::size_t world_size = 60) {
    PipelineFixture fx;
    fx.world = make_world(world_size, seed);
    const auto& w = fx.world;
    const auto& c = fx.counts;

    struct Pick {
        std::size_t r, t;
    };
    std::vector<Pick> far, yes3, yes2, low;
    for (std::size_t r = 0; r < w.size(); ++r) {
        for (std::size_t t = 0; t < w.size(); ++t) {
            if (r == t) continue;
            const int d = differences(w.tuples[r], w.tuples[t]);
            if (d >= 3) {
                if (far.size() < c.sample_discard && (far.empty() || far.back().r != r)) far.push_back({r, t});
                continue;
            }
            const auto a = pipeline::MockPairChecker::rule(w.ids[r], w.ids[t]);
            const int yes = a[0] + a[1] + a[2];
            if (yes == 3 && yes3.size() < c.retain &&
                pipeline::MockGenerator::variant(w.ids[r], w.ids[t]) == static_cast<int>(yes3.size() % 4))
                yes3.push_back({r, t});
            else if (yes == 2 && yes2.size() < c.review && (yes2.empty() || yes2.back().r != r))
                yes2.push_back({r, t});
            else if (yes <= 1 && low.size() < c.discard)
                low.push_back({r, t});
        }
    }
    if (far.size() < c.sample_discard || yes3.size() < c.retain || yes2.size() < c.review || low.size() < c.discard)
        throw std::runtime_error("make_pipeline_fixture: world too small for the designed split");

    std::vector<Pick> all;
    for (auto* v : {&far, &yes3, &yes2, &low}) all.insert(all.end(), v->begin(), v->end());
    nn::Rng rng(seed);
    rng.shuffle(all);

    const auto tok = default_tokenizer();
    fx.manifest.name = "pipeline-fixture";
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto& p = all[i];
        Triplet t;
        t.id = "fx" + std::string(i < 10 ? "0" : "") + std::to_string(i);
        t.ref = {w.ids[p.r], "synth://" + w.ids[p.r], Split::test};
        t.target = {w.ids[p.t], "synth://" + w.ids[p.t], Split::test};
        const auto full = modification_text(w.tuples[p.r], w.tuples[p.t]);
        const auto coarse = full.substr(0, full.find(" and "));
        t.mod_text = {coarse, tok->count(coarse), Grain::coarse};
        t.provenance["source"] = "pipeline-fixture";
        fx.manifest.triplets.push_back(std::move(t));
    }
    fx.manifest.recount();
    return fx;
}

}  // namespace finecir::synth
