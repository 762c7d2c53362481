#pragma once

// Synthetic colored-shape world. Each image is an attribute tuple rendered
// as concatenated one-hot features. Modification texts name only the
// attributes that change, so the reference supplies everything the text
// omits and the text supplies everything the reference lacks.

#include <array>
#include <cstdint>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "finecir/compose/encoders.hpp"
#include "finecir/core/manifest.hpp"
#include "finecir/eval/baselines.hpp"
#include "finecir/nn/params.hpp"
#include "finecir/train/trainer.hpp"

namespace finecir::synth {

inline constexpr int kAttributes = 5;
using Tuple = std::array<int, kAttributes>;

enum Attribute { shape = 0, color = 1, size = 2, background = 3, pattern = 4 };

inline const std::array<std::vector<std::string>, kAttributes>& attribute_values() {
    static const std::array<std::vector<std::string>, kAttributes> v{{
        {"circle", "square", "triangle", "star", "heart"},
        {"red", "green", "blue", "yellow", "purple"},
        {"small", "medium", "large"},
        {"white", "black", "gray", "wooden"},
        {"plain", "striped"},
    }};
    return v;
}

inline int feature_dim() {
    int n = 0;
    for (const auto& a : attribute_values()) n += static_cast<int>(a.size());
    return n;
}

inline int offset(int attribute) {
    int n = 0;
    for (int a = 0; a < attribute; ++a) n += static_cast<int>(attribute_values()[static_cast<std::size_t>(a)].size());
    return n;
}

inline std::vector<double> features(const Tuple& t) {
    std::vector<double> f(static_cast<std::size_t>(feature_dim()), 0.0);
    for (int a = 0; a < kAttributes; ++a) f[static_cast<std::size_t>(offset(a) + t[static_cast<std::size_t>(a)])] = 1.0;
    return f;
}

inline std::string value_name(int attribute, int value) {
    return attribute_values()[static_cast<std::size_t>(attribute)][static_cast<std::size_t>(value)];
}

inline std::string describe(const Tuple& t) {
    return value_name(size, t[size]) + " " + value_name(pattern, t[pattern]) + " " + value_name(color, t[color]) + " " +
           value_name(shape, t[shape]) + " on " + value_name(background, t[background]);
}

inline std::string clause(int attribute, int value) {
    const auto v = value_name(attribute, value);
    switch (attribute) {
        case shape: return "change the shape to a " + v;
        case color: return "the shape should be " + v;
        case size: return "make the shape " + v;
        case background: return "put the shape on a " + v + " background";
        default: return "the shape should be " + v;
    }
}

/// Clauses for every differing attribute, in attribute order, joined by "and".
inline std::string modification_text(const Tuple& from, const Tuple& to) {
    std::string out;
    for (int a = 0; a < kAttributes; ++a) {
        if (from[static_cast<std::size_t>(a)] == to[static_cast<std::size_t>(a)]) continue;
        if (!out.empty()) out += " and ";
        out += clause(a, to[static_cast<std::size_t>(a)]);
    }
    return out;
}

inline int differences(const Tuple& a, const Tuple& b) {
    int n = 0;
    for (int i = 0; i < kAttributes; ++i) n += a[static_cast<std::size_t>(i)] != b[static_cast<std::size_t>(i)] ? 1 : 0;
    return n;
}

inline std::string image_id(std::size_t i) {
    std::ostringstream s;
    s << "img" << std::setw(4) << std::setfill('0') << i;
    return s.str();
}

struct World {
    std::vector<Tuple> tuples;
    std::vector<std::string> ids;
    FeatureStore store;

    std::size_t size() const { return tuples.size(); }
};

/// `n` distinct tuples drawn without replacement from the full product.
inline World make_world(std::size_t n, std::uint64_t seed) {
    std::vector<Tuple> all;
    const auto& v = attribute_values();
    for (int s = 0; s < static_cast<int>(v[0].size()); ++s)
        for (int c = 0; c < static_cast<int>(v[1].size()); ++c)
            for (int z = 0; z < static_cast<int>(v[2].size()); ++z)
                for (int b = 0; b < static_cast<int>(v[3].size()); ++b)
                    for (int p = 0; p < static_cast<int>(v[4].size()); ++p) all.push_back({s, c, z, b, p});
    if (n > all.size()) throw std::invalid_argument("make_world: at most " + std::to_string(all.size()) + " images");
    nn::Rng rng(seed);
    rng.shuffle(all);
    World w;
    for (std::size_t i = 0; i < n; ++i) {
        w.tuples.push_back(all[i]);
        w.ids.push_back(image_id(i));
        w.store.put(w.ids.back(), features(all[i]));
    }
    return w;
}

struct SynthOptions {
    std::size_t train = 3000;
    std::size_t test = 300;
    int max_changes = 2;
    std::size_t subset_size = 6;
    std::uint64_t seed = 0;
};

/// Finalized triplets whose targets differ from the reference in 1..max_changes
/// attributes. Test triplets carry a subset: the target plus the images
/// nearest the reference.
inline DatasetManifest make_manifest(const World& w, const SynthOptions& opt, std::string name = "shapes") {
    nn::Rng rng(opt.seed ^ 0x5eedULL);
    std::vector<std::vector<std::size_t>> near(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        for (std::size_t j = 0; j < w.size(); ++j)
            if (i != j && differences(w.tuples[i], w.tuples[j]) <= opt.max_changes) near[i].push_back(j);
    const auto tok = default_tokenizer();
    DatasetManifest m;
    m.name = std::move(name);
    for (std::size_t n = 0; n < opt.train + opt.test; ++n) {
        const Split split = n < opt.train ? Split::train : Split::test;
        std::size_t r;
        do r = rng.below(w.size());
        while (near[r].empty());
        const std::size_t t = near[r][rng.below(near[r].size())];
        Triplet tr;
        tr.id = std::string(split == Split::train ? "tr" : "te") + std::to_string(n);
        tr.ref = {w.ids[r], "synth://" + w.ids[r], split};
        tr.target = {w.ids[t], "synth://" + w.ids[t], split};
        const auto text = modification_text(w.tuples[r], w.tuples[t]);
        tr.mod_text = {text, tok->count(text), Grain::fine};
        tr.status = Status::finalized;
        tr.provenance["generator"] = "shapes";
        if (split == Split::test && opt.subset_size > 0) {
            std::vector<std::size_t> pool;
            for (auto j : near[r])
                if (j != t) pool.push_back(j);
            rng.shuffle(pool);
            std::vector<std::string> subset{w.ids[t]};
            for (std::size_t k = 0; k < pool.size() && subset.size() < opt.subset_size; ++k)
                subset.push_back(w.ids[pool[k]]);
            std::sort(subset.begin(), subset.end());
            tr.subset_ids = std::move(subset);
        }
        m.triplets.push_back(std::move(tr));
    }
    m.recount();
    return m;
}

inline std::vector<train::TrainingExample> examples(const DatasetManifest& m, const FeatureStore& store, Split split) {
    std::vector<train::TrainingExample> out;
    for (const auto& t : m.triplets)
        if (t.split() == split && t.status == Status::finalized)
            out.push_back({store.get(t.ref.id), t.mod_text.text, store.get(t.target.id)});
    return out;
}

/// Attribute-aligned joint embedding: images embed as their unit one-hot
/// features; texts embed as the unit one-hot of every attribute value word
/// they mention. Stands in for a frozen pretrained image-text model.
class AttributeVlp final : public eval::VlpBackend {
public:
    Eigen::Index dim() const override { return feature_dim(); }

    eval::Row embed_image(const ImageInput& x) const override {
        if (static_cast<int>(x.features.size()) != feature_dim())
            throw DecodeError("image " + x.id + ": expected " + std::to_string(feature_dim()) + " features");
        eval::Row v(feature_dim());
        for (int i = 0; i < feature_dim(); ++i) v(i) = x.features[static_cast<std::size_t>(i)];
        return eval::unit(v);
    }

    eval::Row embed_text(const std::string& text) const override {
        eval::Row v = eval::Row::Zero(feature_dim());
        for (const auto& tok : WhitespacePunctTokenizer{}.tokenize(text))
            for (int a = 0; a < kAttributes; ++a) {
                const auto& vals = attribute_values()[static_cast<std::size_t>(a)];
                for (std::size_t k = 0; k < vals.size(); ++k)
                    if (vals[k] == tok) v(offset(a) + static_cast<int>(k)) = 1.0;
            }
        if (v.norm() == 0.0) v.setConstant(1.0);  // no attribute words: uninformative direction
        return eval::unit(v);
    }

    std::string name() const override { return "attribute-vlp"; }
};

}  // namespace finecir::synth
