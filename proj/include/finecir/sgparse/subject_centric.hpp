#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finecir/compose/encoders.hpp"
#include "finecir/nn/tensor.hpp"
#include "finecir/sgparse/scene_graph.hpp"

namespace finecir::sg {

/// One (1 x D_T) vector per graph element, each the encoder's summary token
/// for that element's surface string.
struct GraphTokenTable {
    std::vector<nn::Var> entities;
    std::vector<std::vector<nn::Var>> attributes;  // parallel to SceneGraph::attributes
    std::vector<nn::Var> predicates;               // parallel to SceneGraph::relations

    std::size_t vector_count() const {
        std::size_t n = entities.size() + predicates.size();
        for (const auto& a : attributes) n += a.size();
        return n;
    }

    /// All element vectors stacked in entity, attribute, predicate order.
    std::vector<nn::Var> all() const {
        std::vector<nn::Var> out(entities);
        for (const auto& a : attributes) out.insert(out.end(), a.begin(), a.end());
        out.insert(out.end(), predicates.begin(), predicates.end());
        return out;
    }
};

/// Encodes every element independently. Identical surface strings share a
/// single encoder call.
inline GraphTokenTable embed_graph(const SceneGraph& g, const EncoderBackend& enc) {
    std::map<std::string, nn::Var> memo;
    auto vec = [&](const std::string& s) {
        auto it = memo.find(s);
        if (it != memo.end()) return it->second;
        auto v = enc.summary(s);
        if (v.rows() != 1 || v.cols() != enc.dims().text_dim)
            throw nn::ShapeError("embed_graph: encoder summary is not 1 x D_T");
        memo.emplace(s, v);
        return v;
    };
    GraphTokenTable t;
    for (const auto& e : g.entities) t.entities.push_back(vec(e));
    for (const auto& attrs : g.attributes) {
        auto& row = t.attributes.emplace_back();
        for (const auto& a : attrs) row.push_back(vec(a));
    }
    for (const auto& r : g.relations) t.predicates.push_back(vec(r.predicate));
    return t;
}

struct NeighborToken {
    enum class Kind { attribute, object };
    Kind kind = Kind::attribute;
    /// Attribute string, or "predicate object" for object tokens.
    std::string label;
    /// Attribute index within the subject (attribute) or relation index (object).
    int source_index = 0;
    /// Object attributes folded into an object token.
    int folded_attributes = 0;
    nn::Var vec;
};

struct Subject {
    int entity = -1;  // -1 for the whole-sentence pseudo-subject
    std::string name;
    nn::Var self;
    std::vector<NeighborToken> neighbors;
};

struct SubjectCentricGraph {
    std::vector<Subject> subjects;

    std::size_t token_count() const {
        std::size_t n = 0;
        for (const auto& s : subjects) n += s.neighbors.size();
        return n;
    }
};

/// Reorganizes a scene graph by subject ownership.
///
/// Subjects are relation subjects plus every entity in no relation. A
/// subject's neighborhood holds its attribute tokens and one token per
/// outgoing relation: object + predicate, with the object's attributes added
/// first when the object is not itself a subject (a subject's attributes
/// already sit in its own neighborhood). When the graph has no subject and a
/// `sentence` token is given, a single pseudo-subject carries it.
inline SubjectCentricGraph to_subject_centric(const SceneGraph& g, const GraphTokenTable& t,
                                              const std::optional<nn::Var>& sentence = std::nullopt) {
    const int u = g.entity_count();
    std::vector<bool> is_subject(static_cast<std::size_t>(u), false), in_relation(static_cast<std::size_t>(u), false);
    for (const auto& r : g.relations) {
        is_subject[static_cast<std::size_t>(r.subject)] = true;
        in_relation[static_cast<std::size_t>(r.subject)] = true;
        in_relation[static_cast<std::size_t>(r.object)] = true;
    }
    for (int e = 0; e < u; ++e)
        if (!in_relation[static_cast<std::size_t>(e)]) is_subject[static_cast<std::size_t>(e)] = true;

    SubjectCentricGraph out;
    for (int e = 0; e < u; ++e) {
        const auto ue = static_cast<std::size_t>(e);
        if (!is_subject[ue]) continue;
        Subject s{e, g.entities[ue], t.entities[ue], {}};
        for (std::size_t k = 0; k < g.attributes[ue].size(); ++k)
            s.neighbors.push_back(
                {NeighborToken::Kind::attribute, g.attributes[ue][k], static_cast<int>(k), 0, t.attributes[ue][k]});
        for (std::size_t ri = 0; ri < g.relations.size(); ++ri) {
            const auto& r = g.relations[ri];
            if (r.subject != e) continue;
            const auto uo = static_cast<std::size_t>(r.object);
            nn::Var obj = t.entities[uo];
            int folded = 0;
            if (!is_subject[uo]) {
                for (const auto& a : t.attributes[uo]) {
                    obj = nn::add(obj, a);
                    ++folded;
                }
            }
            s.neighbors.push_back({NeighborToken::Kind::object, r.predicate + " " + g.entities[uo],
                                   static_cast<int>(ri), folded, nn::add(obj, t.predicates[ri])});
        }
        out.subjects.push_back(std::move(s));
    }
    if (out.subjects.empty() && sentence) out.subjects.push_back({-1, "<sentence>", *sentence, {}});
    return out;
}

}  // namespace finecir::sg
