#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace finecir::sg {

struct Relation {
    int subject = 0;
    std::string predicate;
    int object = 0;
    bool operator==(const Relation&) const = default;
};

/// Entities with per-entity attribute lists and subject-predicate-object
/// relations. Entity identity is its surface string; the index is the order
/// of first mention.
struct SceneGraph {
    std::vector<std::string> entities;
    std::vector<std::vector<std::string>> attributes;  // parallel to entities
    std::vector<Relation> relations;

    int entity_count() const { return static_cast<int>(entities.size()); }

    int find_entity(const std::string& name) const {
        auto it = std::find(entities.begin(), entities.end(), name);
        return it == entities.end() ? -1 : static_cast<int>(it - entities.begin());
    }

    int add_entity(const std::string& name) {
        if (int i = find_entity(name); i >= 0) return i;
        entities.push_back(name);
        attributes.emplace_back();
        return static_cast<int>(entities.size()) - 1;
    }

    void add_attribute(int entity, const std::string& attr) {
        auto& a = attributes.at(static_cast<std::size_t>(entity));
        if (std::find(a.begin(), a.end(), attr) == a.end()) a.push_back(attr);
    }

    void add_relation(int subject, const std::string& predicate, int object) {
        Relation r{subject, predicate, object};
        if (std::find(relations.begin(), relations.end(), r) == relations.end()) relations.push_back(std::move(r));
    }

    std::size_t attribute_count() const {
        std::size_t n = 0;
        for (const auto& a : attributes) n += a.size();
        return n;
    }

    /// Throws std::invalid_argument when an invariant is broken.
    void validate() const {
        if (attributes.size() != entities.size()) throw std::invalid_argument("attributes not parallel to entities");
        for (std::size_t i = 0; i < entities.size(); ++i) {
            if (entities[i].empty()) throw std::invalid_argument("empty entity name");
            if (std::find(entities.begin(), entities.begin() + static_cast<long>(i), entities[i]) !=
                entities.begin() + static_cast<long>(i))
                throw std::invalid_argument("duplicate entity " + entities[i]);
        }
        for (const auto& r : relations) {
            if (r.subject < 0 || r.subject >= entity_count() || r.object < 0 || r.object >= entity_count())
                throw std::invalid_argument("relation endpoint out of range");
            if (r.predicate.empty()) throw std::invalid_argument("empty predicate");
        }
    }

    bool operator==(const SceneGraph&) const = default;
};

/// Structured-text form: three arrays.
///   {"entities":["dog","collar"],
///    "attributes":[{"entity":1,"attribute":"red"}],
///    "relations":[{"subject":0,"predicate":"wearing","object":1}]}
inline nlohmann::ordered_json to_json(const SceneGraph& g) {
    nlohmann::ordered_json j;
    j["entities"] = g.entities;
    j["attributes"] = nlohmann::ordered_json::array();
    for (std::size_t e = 0; e < g.attributes.size(); ++e)
        for (const auto& a : g.attributes[e]) j["attributes"].push_back({{"entity", e}, {"attribute", a}});
    j["relations"] = nlohmann::ordered_json::array();
    for (const auto& r : g.relations)
        j["relations"].push_back({{"subject", r.subject}, {"predicate", r.predicate}, {"object", r.object}});
    return j;
}

/// Parses the structured-text form. Duplicate attributes/relations collapse;
/// duplicate entity names are rejected since entity identity is the name.
inline SceneGraph scene_graph_from_json(const nlohmann::json& j) {
    SceneGraph g;
    for (const auto& e : j.at("entities")) {
        auto name = e.get<std::string>();
        if (g.find_entity(name) >= 0) throw std::invalid_argument("duplicate entity " + name);
        g.add_entity(name);
    }
    for (const auto& a : j.at("attributes")) {
        const int e = a.at("entity").get<int>();
        if (e < 0 || e >= g.entity_count()) throw std::invalid_argument("attribute entity out of range");
        g.add_attribute(e, a.at("attribute").get<std::string>());
    }
    for (const auto& r : j.at("relations")) {
        const int s = r.at("subject").get<int>(), o = r.at("object").get<int>();
        if (s < 0 || s >= g.entity_count() || o < 0 || o >= g.entity_count())
            throw std::invalid_argument("relation endpoint out of range");
        g.add_relation(s, r.at("predicate").get<std::string>(), o);
    }
    g.validate();
    return g;
}

/// Backend contract for parsing modification text into a scene graph.
class ParserBackend {
public:
    virtual ~ParserBackend() = default;
    virtual SceneGraph parse(const std::string& text) const = 0;
    virtual std::string name() const = 0;
    /// Whether concurrent parse() calls on one instance are safe.
    virtual bool reentrant() const = 0;
};

class ParserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace finecir::sg
