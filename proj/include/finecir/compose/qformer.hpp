#pragma once

// Entity-guided composition: a query transformer whose input sequence is
// [learnable queries; projected entity tokens; projected text tokens] and
// which cross-attends to the reference image's visual feature. The output
// at the first query position, projected and unit-normalized, is the
// composed token. The target path reuses the same weights with the queries
// alone.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "finecir/aggregate/gat.hpp"
#include "finecir/compose/encoders.hpp"
#include "finecir/nn/params.hpp"
#include "finecir/nn/tensor.hpp"

namespace finecir::compose {

struct ComposerConfig {
    int width = 32;        // D
    int queries = 4;       // k
    int layers = 1;
    int heads = 4;
    int ffn_mult = 2;
    int text_dim = 32;     // D_T
    int image_dim = 32;    // D_I
    int max_entities = 8;  // entity rows beyond this are dropped

    void validate() const {
        if (width <= 0 || queries < 1 || layers < 1 || heads < 1 || ffn_mult < 1 || text_dim <= 0 || image_dim <= 0 ||
            max_entities < 1)
            throw std::invalid_argument("composer: sizes must be positive (queries >= 1)");
        if (width % heads != 0) throw std::invalid_argument("composer: width must be divisible by heads");
    }
};

struct ComposeResult {
    nn::Var token;            // (1, D), unit norm
    int sequence_length = 0;  // k + E + S (text segment counted at its declared length)
    int entity_rows = 0;
    int attended_length = 0;  // rows that actually enter attention (padding excluded)
};

class QFormer {
public:
    struct Linear {
        nn::Var w, b;
        nn::Var operator()(const nn::Var& x) const { return nn::add_row(nn::matmul(x, w), b); }
    };
    struct Norm {
        nn::Var gain, bias;
        nn::Var operator()(const nn::Var& x) const { return nn::layer_norm_rows(x, gain, bias); }
    };
    struct Attention {
        Linear q, k, v, o;
    };
    struct Block {
        Attention self_attn, cross_attn;
        Norm ln1, ln2, ln3;
        Linear ffn1, ffn2;
    };

    QFormer(ComposerConfig cfg, nn::ParamStore& store, nn::Rng& rng, const std::string& prefix = "composer.")
        : cfg_(cfg) {
        cfg_.validate();
        const int d = cfg_.width;
        auto linear = [&](const std::string& name, int in, int out) {
            return Linear{store.xavier(name + ".w", in, out, rng), store.zeros(name + ".b", 1, out)};
        };
        auto norm = [&](const std::string& name) {
            return Norm{store.ones(name + ".gain", 1, d), store.zeros(name + ".bias", 1, d)};
        };
        queries_ = store.normal(prefix + "queries", cfg_.queries, d, 0.5, rng);
        segment_ = store.normal(prefix + "segment", 3, d, 0.1, rng);
        proj_entity_ = linear(prefix + "proj_entity", cfg_.text_dim, d);
        proj_text_ = linear(prefix + "proj_text", cfg_.text_dim, d);
        for (int l = 0; l < cfg_.layers; ++l) {
            const std::string p = prefix + "layer" + std::to_string(l) + ".";
            Block b;
            b.self_attn = {linear(p + "self.q", d, d), linear(p + "self.k", d, d), linear(p + "self.v", d, d),
                           linear(p + "self.o", d, d)};
            b.cross_attn = {linear(p + "cross.q", d, d), linear(p + "cross.k", cfg_.image_dim, d),
                            linear(p + "cross.v", cfg_.image_dim, d), linear(p + "cross.o", d, d)};
            b.ln1 = norm(p + "ln1");
            b.ln2 = norm(p + "ln2");
            b.ln3 = norm(p + "ln3");
            b.ffn1 = linear(p + "ffn1", d, d * cfg_.ffn_mult);
            b.ffn2 = linear(p + "ffn2", d * cfg_.ffn_mult, d);
            blocks_.push_back(b);
        }
        head_ = store.xavier(prefix + "head", d, d, rng);
    }

    const ComposerConfig& config() const { return cfg_; }

    /// Composed token. `entities` null omits the entity segment; `text` null
    /// omits the text segment.
    ComposeResult compose(const agg::EntityTokens* entities, const TextFeature* text, const nn::Var& visual) const {
        if (visual.cols() != cfg_.image_dim)
            throw nn::ShapeError("compose: visual feature has " + std::to_string(visual.cols()) +
                                 " columns, expected D_I=" + std::to_string(cfg_.image_dim));
        if (visual.rows() < 1) throw nn::ShapeError("compose: empty visual feature");
        ComposeResult res;
        std::vector<nn::Var> seq{nn::add_row(queries_, nn::slice_rows(segment_, 0, 1))};
        res.sequence_length = cfg_.queries;
        if (entities) {
            if (entities->rows.rows() > 0 && entities->rows.cols() != cfg_.text_dim)
                throw nn::ShapeError("compose: entity tokens are not D_T wide");
            const auto e = std::min<Eigen::Index>(entities->rows.rows(), cfg_.max_entities);
            if (e > 0) {
                auto rows = e == entities->rows.rows() ? entities->rows : nn::slice_rows(entities->rows, 0, e);
                seq.push_back(nn::add_row(proj_entity_(rows), nn::slice_rows(segment_, 1, 1)));
            }
            res.entity_rows = static_cast<int>(e);
            res.sequence_length += static_cast<int>(e);
        }
        if (text) {
            if (text->tokens.cols() != cfg_.text_dim) throw nn::ShapeError("compose: text feature is not D_T wide");
            const int valid = text->valid_count();
            if (valid > 0) seq.push_back(nn::add_row(proj_text_(text->valid_rows()), nn::slice_rows(segment_, 2, 1)));
            res.sequence_length += static_cast<int>(text->mask.size());
        }
        nn::Var x = seq.size() == 1 ? seq.front() : nn::concat_rows(seq);
        res.attended_length = static_cast<int>(x.rows());
        for (const auto& b : blocks_) {
            x = b.ln1(nn::add(x, attend(b.self_attn, x, x)));
            x = b.ln2(nn::add(x, attend(b.cross_attn, x, visual)));
            x = b.ln3(nn::add(x, b.ffn2(nn::gelu(b.ffn1(x)))));
        }
        res.token = nn::l2_normalize_rows(nn::matmul(nn::slice_rows(x, 0, 1), head_));
        return res;
    }

    /// Target token: queries only, cross-attending to the target's features.
    nn::Var encode_target(const nn::Var& visual) const { return compose(nullptr, nullptr, visual).token; }

private:
    nn::Var attend(const Attention& a, const nn::Var& xq, const nn::Var& xkv) const {
        auto q = a.q(xq), k = a.k(xkv), v = a.v(xkv);
        const int dh = cfg_.width / cfg_.heads;
        const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<nn::Var> heads;
        for (int h = 0; h < cfg_.heads; ++h) {
            auto qh = nn::slice_cols(q, h * dh, dh), kh = nn::slice_cols(k, h * dh, dh), vh = nn::slice_cols(v, h * dh, dh);
            auto w = nn::softmax_rows(nn::scale(nn::matmul(qh, nn::transpose(kh)), inv));
            heads.push_back(nn::matmul(w, vh));
        }
        return a.o(heads.size() == 1 ? heads.front() : nn::concat_cols(heads));
    }

    ComposerConfig cfg_;
    nn::Var queries_, segment_, head_;
    Linear proj_entity_, proj_text_;
    std::vector<Block> blocks_;
};

struct MlpComposerConfig {
    int width = 32;  // D
    int hidden = 64;
    int text_dim = 32;
    int image_dim = 32;
};

/// Ablation composer: mean-pool entity, text and visual features,
/// concatenate, two-layer feed-forward to D, normalize. Targets use a
/// linear head over the pooled visual feature.
class MlpComposer {
public:
    MlpComposer(MlpComposerConfig cfg, nn::ParamStore& store, nn::Rng& rng, const std::string& prefix = "mlp.")
        : cfg_(cfg) {
        const int in = 2 * cfg_.text_dim + cfg_.image_dim;
        w1_ = store.xavier(prefix + "w1", in, cfg_.hidden, rng);
        b1_ = store.normal(prefix + "b1", 1, cfg_.hidden, 0.1, rng, false);
        w2_ = store.xavier(prefix + "w2", cfg_.hidden, cfg_.width, rng);
        b2_ = store.normal(prefix + "b2", 1, cfg_.width, 0.1, rng, false);
        wt_ = store.xavier(prefix + "target.w", cfg_.image_dim, cfg_.width, rng);
        bt_ = store.zeros(prefix + "target.b", 1, cfg_.width);
    }

    const MlpComposerConfig& config() const { return cfg_; }

    /// Pooled inputs are (1, D_T), (1, D_T), (1, D_I).
    nn::Var compose_pooled(const nn::Var& entity, const nn::Var& text, const nn::Var& visual) const {
        if (entity.cols() != cfg_.text_dim || text.cols() != cfg_.text_dim || visual.cols() != cfg_.image_dim ||
            entity.rows() != 1 || text.rows() != 1 || visual.rows() != 1)
            throw nn::ShapeError("compose_query_mlp: expected pooled (1,D_T),(1,D_T),(1,D_I) inputs");
        auto h = nn::relu(nn::add_row(nn::matmul(nn::concat_cols({entity, text, visual}), w1_), b1_));
        return nn::l2_normalize_rows(nn::add_row(nn::matmul(h, w2_), b2_));
    }

    nn::Var compose(const agg::EntityTokens& entities, const TextFeature& text, const nn::Var& visual) const {
        auto ent = entities.rows.rows() > 0 ? nn::mean_rows(entities.rows)
                                            : nn::constant(nn::Mat::Zero(1, cfg_.text_dim));
        auto txt = text.valid_count() > 0 ? nn::mean_rows(text.valid_rows())
                                          : nn::constant(nn::Mat::Zero(1, cfg_.text_dim));
        return compose_pooled(ent, txt, nn::mean_rows(visual));
    }

    nn::Var encode_target(const nn::Var& visual) const {
        return nn::l2_normalize_rows(nn::add_row(nn::matmul(nn::mean_rows(visual), wt_), bt_));
    }

    nn::Var w1() const { return w1_; }
    nn::Var b1() const { return b1_; }
    nn::Var w2() const { return w2_; }
    nn::Var b2() const { return b2_; }

private:
    MlpComposerConfig cfg_;
    nn::Var w1_, b1_, w2_, b2_, wt_, bt_;
};

}  // namespace finecir::compose
