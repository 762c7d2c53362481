#pragma once

// Property sweeps shared by the unit suites and the acceptance binary. Each
// returns the worst deviation it saw; callers decide the tolerance.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "finecir/aggregate/gat.hpp"
#include "finecir/compose/qformer.hpp"
#include "finecir/eval/metrics.hpp"
#include "finecir/train/loss.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace finecir::testing {

struct LossSweep {
    double max_dev = 0.0;      // bbc vs brute force
    double kl_max_dev = 0.0;   // kl vs brute force (same optimum, same value)
    double b1 = -1.0;          // bbc with a single pair
    double uniform_dev = 0.0;  // |bbc - ln B| with identical rows
    int instances = 0;
};

inline LossSweep loss_sweep(int instances = 100, std::uint64_t seed = 1) {
    nn::Rng rng(seed);
    LossSweep s;
    for (int n = 0; n < instances; ++n) {
        const long b = 1 + static_cast<long>(rng.below(8));
        const long d = 1 + static_cast<long>(rng.below(16));
        const double tau = rng.uniform(0.02, 1.0);
        const auto c = unit_rows(rng, b, d), t = unit_rows(rng, b, d);
        const double ref = brute_bbc(c, t, tau);
        s.max_dev = std::max(s.max_dev, std::abs(train::bbc_loss_value(c, t, tau) - ref));
        s.kl_max_dev = std::max(s.kl_max_dev, std::abs(train::kl_loss_value(c, t, tau) - ref));
        ++s.instances;
    }
    const auto one = unit_rows(rng, 1, 12);
    s.b1 = train::bbc_loss_value(one, unit_rows(rng, 1, 12), 0.07);
    for (long b = 2; b <= 8; ++b) {
        const Eigen::MatrixXd same = one.replicate(b, 1);
        s.uniform_dev = std::max(s.uniform_dev, std::abs(train::bbc_loss_value(same, same, 0.07) - std::log(b)));
    }
    return s;
}

// ------------------------------------------------------------- aggregation

inline sg::Subject random_subject(nn::Rng& rng, int dim, int neighbors) {
    sg::Subject s;
    s.entity = 0;
    s.name = "s";
    s.self = nn::constant(random_mat(rng, 1, dim));
    for (int i = 0; i < neighbors; ++i)
        s.neighbors.push_back({sg::NeighborToken::Kind::attribute, "n" + std::to_string(i), i, 0,
                               nn::constant(random_mat(rng, 1, dim))});
    return s;
}

struct AggSweep {
    double permutation_dev = 0.0;  // output change under neighbor shuffles
    double attention_sum_dev = 0.0;
    double self_loop_dev = 0.0;    // empty neighborhood vs hand computation
    int subjects = 0;
};

inline AggSweep aggregation_sweep(agg::Scoring scoring, int layers, int trials = 40, std::uint64_t seed = 3) {
    nn::Rng rng(seed);
    nn::ParamStore store;
    agg::AggregatorConfig cfg;
    cfg.dim = 12;
    cfg.heads = 3;
    cfg.layers = layers;
    cfg.scoring = scoring;
    agg::GatAggregator a(cfg, store, rng);
    AggSweep s;
    nn::NoGradGuard guard;
    for (int t = 0; t < trials; ++t) {
        const int n = static_cast<int>(rng.below(7));
        auto subj = random_subject(rng, cfg.dim, n);
        std::vector<Eigen::RowVectorXd> attn;
        const nn::Mat base = a.aggregate_subject(subj, &attn).value();
        ++s.subjects;
        for (const auto& w : attn) s.attention_sum_dev = std::max(s.attention_sum_dev, std::abs(w.sum() - 1.0));
        for (int p = 0; p < 5 && n > 1; ++p) {
            auto shuffled = subj;
            rng.shuffle(shuffled.neighbors);
            s.permutation_dev =
                std::max(s.permutation_dev, (a.aggregate_subject(shuffled).value() - base).cwiseAbs().maxCoeff());
        }
        if (n == 0) {
            const Eigen::RowVectorXd expect = self_loop_output(a, subj.self.value().row(0));
            s.self_loop_dev = std::max(s.self_loop_dev, (base.row(0) - expect).cwiseAbs().maxCoeff());
            for (const auto& w : attn) s.self_loop_dev = std::max(s.self_loop_dev, std::abs(w(0) - 1.0));
        }
    }
    // Make sure the empty case is always exercised.
    auto lone = random_subject(rng, cfg.dim, 0);
    const Eigen::RowVectorXd expect = self_loop_output(a, lone.self.value().row(0));
    s.self_loop_dev =
        std::max(s.self_loop_dev, (a.aggregate_subject(lone).value().row(0) - expect).cwiseAbs().maxCoeff());
    return s;
}

// ---------------------------------------------------------------- gradients

inline GradReport aggregator_gradcheck(agg::Scoring scoring, int layers, std::uint64_t seed = 5) {
    nn::Rng rng(seed);
    nn::ParamStore store;
    agg::AggregatorConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.layers = layers;
    cfg.scoring = scoring;
    agg::GatAggregator a(cfg, store, rng);
    sg::SubjectCentricGraph g;
    g.subjects = {random_subject(rng, cfg.dim, 3), random_subject(rng, cfg.dim, 0), random_subject(rng, cfg.dim, 1)};
    const nn::Var w = nn::constant(random_mat(rng, 3, cfg.dim));
    return check_gradients(store, [&] { return nn::sum_all(nn::mul(a.aggregate(g).rows, w)); });
}

struct ComposerFixture {
    nn::ParamStore store;
    nn::Rng rng{7};
    compose::ComposerConfig cfg;
    agg::EntityTokens entities;
    TextFeature text;
    nn::Var visual;

    ComposerFixture() {
        cfg.width = 8;
        cfg.queries = 2;
        cfg.heads = 2;
        cfg.layers = 1;
        cfg.ffn_mult = 2;
        cfg.text_dim = 6;
        cfg.image_dim = 5;
        cfg.max_entities = 4;
        entities.rows = nn::constant(random_mat(rng, 2, cfg.text_dim));
        entities.subject_entity = {0, 1};
        text.tokens = nn::constant(random_mat(rng, 4, cfg.text_dim));
        text.mask = {true, true, true, false};
        visual = nn::constant(random_mat(rng, 3, cfg.image_dim));
    }
};

inline GradReport qformer_gradcheck() {
    ComposerFixture f;
    compose::QFormer q(f.cfg, f.store, f.rng);
    const nn::Var target = nn::constant(random_mat(f.rng, 3, f.cfg.image_dim));
    // Two-pair contrastive loss so every parameter (queries, both paths) is live.
    return check_gradients(f.store, [&] {
        auto c = nn::concat_rows({q.compose(&f.entities, &f.text, f.visual).token, q.encode_target(f.visual)});
        auto t = nn::concat_rows({q.encode_target(target), q.compose(&f.entities, &f.text, target).token});
        return train::bbc_loss(c, t, 0.5);
    });
}

inline GradReport mlp_gradcheck() {
    ComposerFixture f;
    compose::MlpComposer m({8, 10, f.cfg.text_dim, f.cfg.image_dim}, f.store, f.rng);
    const nn::Var target = nn::constant(random_mat(f.rng, 3, f.cfg.image_dim));
    return check_gradients(f.store, [&] {
        auto c = nn::concat_rows({m.compose(f.entities, f.text, f.visual), m.compose(f.entities, f.text, target)});
        auto t = nn::concat_rows({m.encode_target(target), m.encode_target(f.visual)});
        return train::bbc_loss(c, t, 0.5);
    });
}

/// End to end: gradients reach the aggregator through the composer.
inline GradReport pipeline_gradcheck() {
    ComposerFixture f;
    agg::AggregatorConfig ac;
    ac.dim = f.cfg.text_dim;
    ac.heads = 2;
    agg::GatAggregator a(ac, f.store, f.rng);
    compose::QFormer q(f.cfg, f.store, f.rng);
    sg::SubjectCentricGraph g;
    g.subjects = {random_subject(f.rng, ac.dim, 2), random_subject(f.rng, ac.dim, 1)};
    const nn::Var target = nn::constant(random_mat(f.rng, 3, f.cfg.image_dim));
    return check_gradients(f.store, [&] {
        auto ent = a.aggregate(g);
        auto c = nn::concat_rows({q.compose(&ent, &f.text, f.visual).token, q.compose(&ent, nullptr, target).token});
        auto t = nn::concat_rows({q.encode_target(target), q.encode_target(f.visual)});
        return train::bbc_loss(c, t, 0.3);
    });
}

// ------------------------------------------------------------------ metrics

struct MetricSweep {
    int fixtures = 0;
    int rank_mismatches = 0;
    int order_mismatches = 0;
    int subset_mismatches = 0;
    int recall_mismatches = 0;
    int monotonicity_violations = 0;
    std::size_t largest_gallery = 0;
};

/// Random galleries up to `max_gallery` with deliberate duplicate vectors
/// so that the id tie-break is exercised.
inline MetricSweep metric_sweep(int fixtures = 50, std::size_t max_gallery = 200, std::uint64_t seed = 9) {
    nn::Rng rng(seed);
    MetricSweep s;
    for (int f = 0; f < fixtures; ++f) {
        const std::size_t n = 2 + rng.below(max_gallery - 1);
        const long d = 2 + static_cast<long>(rng.below(6));
        std::vector<Candidate> gallery;
        eval::GalleryIndex index;
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::RowVectorXd v(d);
            if (i > 0 && rng.uniform() < 0.2) {
                v = gallery[rng.below(i)].v;  // exact duplicate: tie on cosine
            } else {
                for (long k = 0; k < d; ++k) v(k) = rng.normal();
            }
            // Shuffled, zero-padded ids so id order differs from insertion order.
            std::string id = "g" + std::to_string(1000 + (i * 7919) % 9000);
            while (index.contains(id)) id += "x";
            gallery.push_back({id, v});
            index.add(id, v);
        }
        s.largest_gallery = std::max(s.largest_gallery, n);

        std::vector<int> ranks;
        for (int qn = 0; qn < 20; ++qn) {
            Eigen::RowVectorXd q(d);
            if (qn % 4 == 0) {
                q = gallery[rng.below(n)].v;
            } else {
                for (long k = 0; k < d; ++k) q(k) = rng.normal();
            }
            const auto& target = gallery[rng.below(n)].id;
            std::set<std::string> exclude;
            if (n > 2 && qn % 2 == 0) {
                const auto& ex = gallery[rng.below(n)].id;
                if (ex != target) exclude.insert(ex);
            }
            const int r = eval::rank_of(q, index, target, exclude);
            if (r != brute_rank(q, gallery, target, exclude)) ++s.rank_mismatches;
            ranks.push_back(r);

            if (qn == 0) {
                const auto order = eval::rank(q, index);
                for (std::size_t p = 0; p < order.size(); ++p)
                    if (brute_rank(q, gallery, order[p]) != static_cast<int>(p) + 1) ++s.order_mismatches;
            }

            std::vector<std::string> subset{target};
            for (std::size_t m = 0; m < std::min<std::size_t>(5, n - 1); ++m) {
                const auto& id = gallery[rng.below(n)].id;
                if (std::find(subset.begin(), subset.end(), id) == subset.end()) subset.push_back(id);
            }
            std::set<std::string> outside;
            for (const auto& c : gallery)
                if (std::find(subset.begin(), subset.end(), c.id) == subset.end()) outside.insert(c.id);
            if (eval::subset_rank(q, index, subset, target) != brute_rank(q, gallery, target, outside))
                ++s.subset_mismatches;
        }
        double prev = -1.0;
        for (int k = 1; k <= static_cast<int>(n); ++k) {
            const double r = eval::recall_at_k(ranks, k);
            if (r != brute_recall(ranks, k)) ++s.recall_mismatches;
            if (r < prev) ++s.monotonicity_violations;
            prev = r;
        }
        if (prev != 1.0) ++s.monotonicity_violations;
        ++s.fixtures;
    }
    return s;
}

}  // namespace finecir::testing
