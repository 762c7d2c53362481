#pragma once

// Subject-centric aggregation: graph attention over each subject's star
// neighborhood ({self} plus attribute and object tokens), producing one
// entity token per subject.

#include <stdexcept>
#include <string>
#include <vector>

#include "finecir/nn/params.hpp"
#include "finecir/nn/tensor.hpp"
#include "finecir/sgparse/subject_centric.hpp"

namespace finecir::agg {

enum class Scoring {
    gat,    // e_j = LeakyReLU(a_dst . W h_self + a_src . W h_j)
    gatv2,  // e_j = a . LeakyReLU(W_dst h_self + W_src h_j)
};

inline std::string to_string(Scoring s) { return s == Scoring::gat ? "gat" : "gatv2"; }
inline Scoring parse_scoring(const std::string& s) {
    if (s == "gat") return Scoring::gat;
    if (s == "gatv2") return Scoring::gatv2;
    throw std::invalid_argument("unknown attention scoring '" + s + "'");
}

struct AggregatorConfig {
    int dim = 32;  // D_T in and out
    int layers = 1;
    int heads = 4;
    int head_dim = 0;  // 0: dim / heads
    Scoring scoring = Scoring::gatv2;
    double negative_slope = 0.2;

    int effective_head_dim() const { return head_dim > 0 ? head_dim : dim / heads; }
    void validate() const {
        if (dim <= 0 || layers <= 0 || heads <= 0) throw std::invalid_argument("aggregator: sizes must be positive");
        if (effective_head_dim() <= 0) throw std::invalid_argument("aggregator: head_dim must be positive");
    }
};

/// Rows are entity tokens, one per subject, in subject order.
struct EntityTokens {
    nn::Var rows;                                        // (E, D_T)
    std::vector<int> subject_entity;                     // row -> scene-graph entity (-1: pseudo-subject)
    std::vector<std::vector<Eigen::RowVectorXd>> attention;  // [subject][head], last layer, over {self} + neighbors

    int count() const { return static_cast<int>(subject_entity.size()); }
};

class GatAggregator {
public:
    struct Head {
        nn::Var w_src, w_dst, att;   // gatv2
        nn::Var w, a_src, a_dst;     // gat
    };
    struct Layer {
        std::vector<Head> heads;
        nn::Var w_out, b_out;
    };

    GatAggregator(AggregatorConfig cfg, nn::ParamStore& store, nn::Rng& rng, const std::string& prefix = "agg.")
        : cfg_(cfg) {
        cfg_.validate();
        const int d = cfg_.dim, dh = cfg_.effective_head_dim();
        for (int l = 0; l < cfg_.layers; ++l) {
            const std::string lp = prefix + "l" + std::to_string(l) + ".";
            Layer layer;
            for (int h = 0; h < cfg_.heads; ++h) {
                const std::string hp = lp + "h" + std::to_string(h) + ".";
                Head head;
                if (cfg_.scoring == Scoring::gatv2) {
                    head.w_src = store.xavier(hp + "w_src", d, dh, rng);
                    head.w_dst = store.xavier(hp + "w_dst", d, dh, rng);
                    head.att = store.xavier(hp + "att", dh, 1, rng);
                } else {
                    head.w = store.xavier(hp + "w", d, dh, rng);
                    head.a_src = store.xavier(hp + "a_src", dh, 1, rng);
                    head.a_dst = store.xavier(hp + "a_dst", dh, 1, rng);
                }
                layer.heads.push_back(head);
            }
            layer.w_out = store.xavier(lp + "w_out", cfg_.heads * dh, d, rng);
            layer.b_out = store.zeros(lp + "b_out", 1, d);
            layers_.push_back(layer);
        }
    }

    const AggregatorConfig& config() const { return cfg_; }
    const std::vector<Layer>& layers() const { return layers_; }

    EntityTokens aggregate(const sg::SubjectCentricGraph& g) const {
        EntityTokens out;
        std::vector<nn::Var> rows;
        for (const auto& s : g.subjects) {
            std::vector<Eigen::RowVectorXd> attn;
            rows.push_back(aggregate_subject(s, &attn));
            out.subject_entity.push_back(s.entity);
            out.attention.push_back(std::move(attn));
        }
        out.rows = rows.empty() ? nn::constant(nn::Mat(0, cfg_.dim)) : nn::concat_rows(rows);
        return out;
    }

    /// Entity token for one subject; `attention` receives the last layer's
    /// per-head weights.
    nn::Var aggregate_subject(const sg::Subject& s, std::vector<Eigen::RowVectorXd>* attention = nullptr) const {
        std::vector<nn::Var> nodes{s.self};
        for (const auto& n : s.neighbors) nodes.push_back(n.vec);
        for (const auto& v : nodes)
            if (v.rows() != 1 || v.cols() != cfg_.dim)
                throw nn::ShapeError("aggregate: token dimension " + std::to_string(v.cols()) + ", expected " +
                                     std::to_string(cfg_.dim));
        nn::Var x = nn::concat_rows(nodes);
        nn::Var subject_row;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& layer = layers_[l];
            const bool last = l + 1 == layers_.size();
            std::vector<nn::Var> head_out, messages;
            if (attention && last) attention->clear();
            for (const auto& head : layer.heads) {
                nn::Var alpha;
                nn::Var msg = attend(head, x, alpha);
                if (attention && last) attention->push_back(alpha.value().row(0));
                head_out.push_back(nn::matmul(alpha, msg));
                messages.push_back(msg);
            }
            subject_row = nn::elu(nn::add_row(nn::matmul(nn::concat_cols(head_out), layer.w_out), layer.b_out));
            if (!last && x.rows() > 1) {
                // Neighbors only have their self-loop, so their update is their own message.
                auto nbr = nn::slice_rows(nn::concat_cols(messages), 1, x.rows() - 1);
                auto upd = nn::elu(nn::add_row(nn::matmul(nbr, layer.w_out), layer.b_out));
                x = nn::concat_rows({subject_row, upd});
            } else if (!last) {
                x = subject_row;
            }
        }
        return subject_row;
    }

private:
    /// Returns the per-node messages (n+1, Dh); `alpha` receives (1, n+1).
    nn::Var attend(const Head& head, const nn::Var& x, nn::Var& alpha) const {
        const double slope = cfg_.negative_slope;
        auto self = nn::slice_rows(x, 0, 1);
        if (cfg_.scoring == Scoring::gatv2) {
            auto msg = nn::matmul(x, head.w_src);
            auto z = nn::leaky_relu(nn::add_row(msg, nn::matmul(self, head.w_dst)), slope);
            alpha = nn::softmax_rows(nn::transpose(nn::matmul(z, head.att)));
            return msg;
        }
        auto msg = nn::matmul(x, head.w);
        auto src = nn::transpose(nn::matmul(msg, head.a_src));             // (1, n+1)
        auto dst = nn::matmul(nn::slice_rows(msg, 0, 1), head.a_dst);      // (1, 1)
        auto ones = nn::constant(nn::Mat::Ones(1, x.rows()));
        alpha = nn::softmax_rows(nn::leaky_relu(nn::add(src, nn::mul_scalar(ones, dst)), slope));
        return msg;
    }

    AggregatorConfig cfg_;
    std::vector<Layer> layers_;
};

/// Unweighted mean of each subject's self token and neighborhood tokens.
inline EntityTokens aggregate_meanpool(const sg::SubjectCentricGraph& g, int dim) {
    EntityTokens out;
    std::vector<nn::Var> rows;
    for (const auto& s : g.subjects) {
        std::vector<nn::Var> nodes{s.self};
        for (const auto& n : s.neighbors) nodes.push_back(n.vec);
        rows.push_back(nn::mean_rows(nn::concat_rows(nodes)));
        out.subject_entity.push_back(s.entity);
        Eigen::RowVectorXd w = Eigen::RowVectorXd::Constant(static_cast<Eigen::Index>(nodes.size()),
                                                            1.0 / static_cast<double>(nodes.size()));
        out.attention.push_back({w});
    }
    out.rows = rows.empty() ? nn::constant(nn::Mat(0, dim)) : nn::concat_rows(rows);
    return out;
}

}  // namespace finecir::agg
