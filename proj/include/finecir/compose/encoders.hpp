#pragma once

// Encoder backends. The toy backend is a small trainable stand-in for a
// pretrained vision-language encoder pair: a hashed-vocabulary text encoder
// and an affine image encoder over feature vectors.

#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecir/core/hash.hpp"
#include "finecir/core/tokenizer.hpp"
#include "finecir/nn/params.hpp"
#include "finecir/nn/tensor.hpp"

namespace finecir {

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Pixel stand-in: an identified feature vector.
struct ImageInput {
    std::string id;
    std::vector<double> features;
};

/// Image id -> feature vector, loaded from JSONL records {"id":..,"features":[..]}.
class FeatureStore {
public:
    void put(std::string id, std::vector<double> f) {
        if (dim_ == 0) dim_ = f.size();
        if (f.size() != dim_) throw DecodeError("feature dimension mismatch for " + id);
        order_.push_back(id);
        if (!features_.emplace(std::move(id), std::move(f)).second) throw DecodeError("duplicate image id");
    }

    ImageInput get(const std::string& id) const {
        auto it = features_.find(id);
        if (it == features_.end()) throw DecodeError("no features for image " + id);
        return {id, it->second};
    }

    bool contains(const std::string& id) const { return features_.count(id) > 0; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return features_.size(); }
    /// Ids in insertion order.
    const std::vector<std::string>& ids() const { return order_; }

    static FeatureStore load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DecodeError("cannot open feature store " + path);
        FeatureStore s;
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                auto j = nlohmann::json::parse(line);
                s.put(j.at("id").get<std::string>(), j.at("features").get<std::vector<double>>());
            } catch (const nlohmann::json::exception& e) {
                throw DecodeError(path + ":" + std::to_string(n) + ": " + e.what());
            }
        }
        return s;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw DecodeError("cannot write feature store " + path);
        for (const auto& id : order_) {
            nlohmann::ordered_json j;
            j["id"] = id;
            j["features"] = features_.at(id);
            out << j.dump() << '\n';
        }
    }

private:
    std::map<std::string, std::vector<double>> features_;
    std::vector<std::string> order_;
    std::size_t dim_ = 0;
};

/// Token sequence (S x D_T) with a validity mask; padded rows are zero.
struct TextFeature {
    nn::Var tokens;
    std::vector<bool> mask;

    int valid_count() const {
        int n = 0;
        for (bool m : mask) n += m ? 1 : 0;
        return n;
    }
    /// The valid prefix (valid rows always precede padding).
    nn::Var valid_rows() const { return nn::slice_rows(tokens, 0, valid_count()); }
};

struct EncoderDims {
    int channels = 4;      // C
    int image_dim = 32;    // D_I
    int seq_len = 16;      // S
    int text_dim = 32;     // D_T
};

class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;
    virtual EncoderDims dims() const = 0;
    /// (C, D_I) visual feature.
    virtual nn::Var encode_image(const ImageInput& x) const = 0;
    /// (S, D_T) token feature plus mask.
    virtual TextFeature encode_text(const std::string& text) const = 0;
    /// (1, D_T) summary (CLS-equivalent) token of a string.
    virtual nn::Var summary(const std::string& text) const = 0;
    /// Whether gradients flow into this backend's parameters.
    virtual bool trainable() const = 0;
};

struct ToyEncoderConfig {
    EncoderDims dims;
    int vocab_buckets = 1024;
    int feature_dim = 0;  // F; must match the feature store
    bool trainable = true;
};

/// Hashed-vocabulary text encoder + affine-tanh image encoder. Parameters
/// live in the caller's ParamStore under "encoder.".
class ToyEncoder final : public EncoderBackend {
public:
    ToyEncoder(ToyEncoderConfig cfg, nn::ParamStore& store, nn::Rng& rng) : cfg_(cfg) {
        if (cfg.feature_dim <= 0) throw std::invalid_argument("ToyEncoder: feature_dim must be positive");
        const auto& d = cfg.dims;
        embed_ = store.normal("encoder.text.embed", cfg.vocab_buckets, d.text_dim, 0.5, rng);
        pos_ = store.normal("encoder.text.pos", d.seq_len, d.text_dim, 0.1, rng);
        img_w_ = store.xavier("encoder.image.w", cfg.feature_dim, d.channels * d.image_dim, rng);
        img_b_ = store.zeros("encoder.image.b", 1, d.channels * d.image_dim);
        store.set_trainable("encoder.", cfg.trainable);
    }

    EncoderDims dims() const override { return cfg_.dims; }
    bool trainable() const override { return cfg_.trainable; }
    const ToyEncoderConfig& config() const { return cfg_; }

    nn::Var encode_image(const ImageInput& x) const override {
        if (static_cast<int>(x.features.size()) != cfg_.feature_dim)
            throw DecodeError("image " + x.id + ": expected " + std::to_string(cfg_.feature_dim) + " features, got " +
                              std::to_string(x.features.size()));
        nn::Mat f(1, cfg_.feature_dim);
        for (int i = 0; i < cfg_.feature_dim; ++i) f(0, i) = x.features[static_cast<std::size_t>(i)];
        auto h = nn::tanh(nn::add_row(nn::matmul(nn::constant(std::move(f)), img_w_), img_b_));
        return nn::reshape(h, cfg_.dims.channels, cfg_.dims.image_dim);
    }

    TextFeature encode_text(const std::string& text) const override {
        const auto& d = cfg_.dims;
        auto ids = bucket_ids(text);
        if (static_cast<int>(ids.size()) > d.seq_len) ids.resize(static_cast<std::size_t>(d.seq_len));
        const auto n = static_cast<Eigen::Index>(ids.size());
        TextFeature tf;
        tf.mask.assign(static_cast<std::size_t>(d.seq_len), false);
        for (Eigen::Index i = 0; i < n; ++i) tf.mask[static_cast<std::size_t>(i)] = true;
        std::vector<nn::Var> parts;
        if (n > 0) parts.push_back(nn::add(nn::gather_rows(embed_, ids), nn::slice_rows(pos_, 0, n)));
        if (n < d.seq_len) parts.push_back(nn::constant(nn::Mat::Zero(d.seq_len - n, d.text_dim)));
        tf.tokens = parts.size() == 1 ? parts.front() : nn::concat_rows(parts);
        return tf;
    }

    nn::Var summary(const std::string& text) const override {
        auto ids = bucket_ids(text);
        if (ids.empty()) return nn::constant(nn::Mat::Zero(1, cfg_.dims.text_dim));
        return nn::mean_rows(nn::gather_rows(embed_, std::move(ids)));
    }

    /// Vocabulary bucket of each content (word) token.
    std::vector<Eigen::Index> bucket_ids(const std::string& text) const {
        std::vector<Eigen::Index> ids;
        for (const auto& t : WhitespacePunctTokenizer{}.tokenize(text)) {
            auto c = static_cast<unsigned char>(t[0]);
            if (!std::isalnum(c) && c < 0x80) continue;
            ids.push_back(static_cast<Eigen::Index>(fnv1a64(t) % static_cast<std::uint64_t>(cfg_.vocab_buckets)));
        }
        return ids;
    }

private:
    ToyEncoderConfig cfg_;
    nn::Var embed_, pos_, img_w_, img_b_;
};

}  // namespace finecir
