#pragma once

// Mock-pipeline runs over the 20-triplet fixture, plus a brute-force check
// of every assess decision.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "finecir/pipeline/pipeline.hpp"
#include "finecir/synth/pipeline_fixture.hpp"
#include "support/oracles.hpp"

namespace finecir::testing {

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto d = std::filesystem::temp_directory_path() / ("finecir_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

inline review::StoreOptions logical_store_options() {
    review::StoreOptions so;
    so.clock = review::logical_time();
    so.fsync = false;
    return so;
}

struct FixtureRun {
    synth::PipelineFixture fx = synth::make_pipeline_fixture();
    synth::AttributeVlp vlp;
    pipeline::PromptRegistry prompts = pipeline::PromptRegistry::builtin();
    pipeline::PipelineConfig cfg;
    std::filesystem::path dir;
    review::ReviewStore store;

    explicit FixtureRun(const std::filesystem::path& d) : dir(d), store((d / "review").string(), logical_store_options()) {}

    pipeline::PipelineResult run(const DatasetManifest& in) {
        pipeline::PipelineContext ctx{fx.world.store, vlp, pipeline::mock_clients(), prompts, store};
        return pipeline::run_pipeline(in, cfg, ctx);
    }
    pipeline::PipelineResult run() { return run(fx.manifest); }

    std::string manifest_bytes(const pipeline::PipelineResult& r) const {
        std::ostringstream ss;
        write_manifest(ss, r.manifest);
        return ss.str();
    }
    std::string review_log() const { return slurp(store.log_path()); }
};

/// Text the assess stages saw: compression keeps the pre-compression text.
inline std::string assessed_text(const Triplet& t) {
    auto it = t.provenance.find("uncompressed_text");
    return it != t.provenance.end() ? it->second : t.mod_text.text;
}

struct AssessAudit {
    int flagged = 0, passed = 0, mismatches = 0;
};

/// Re-ranks every triplet the assess stages saw and checks that exactly the
/// rank-1 ones went to review.
inline AssessAudit audit_assess(const FixtureRun& fr, const pipeline::PipelineResult& r) {
    std::set<std::string> target_ids;
    for (const auto& t : fr.fx.manifest.triplets) target_ids.insert(t.target.id);
    std::vector<Candidate> gallery;
    for (const auto& id : target_ids) gallery.push_back({id, fr.vlp.embed_image(fr.fx.world.store.get(id))});

    std::map<std::string, const Triplet*> by_id;
    for (const auto& t : r.manifest.triplets) by_id[t.id] = &t;

    AssessAudit a;
    for (const std::string stage : {"assess_text", "assess_image"}) {
        for (const auto& d : r.ledger.stage(stage).dispositions) {
            const Triplet& t = *by_id.at(d.triplet_id);
            const bool by_text = stage == "assess_text";
            const auto q = by_text ? fr.vlp.embed_text(assessed_text(t)) : fr.vlp.embed_image(fr.fx.world.store.get(t.ref.id));
            std::set<std::string> exclude;
            if (!by_text) exclude.insert(t.ref.id);
            const int rank = brute_rank(q, gallery, t.target.id, exclude);
            const bool flagged = d.outcome == "review";
            (flagged ? a.flagged : a.passed) += 1;
            if (flagged != (rank == 1)) ++a.mismatches;
            if (t.provenance.at(stage + "_rank") != std::to_string(rank)) ++a.mismatches;
        }
    }
    return a;
}

}  // namespace finecir::testing
