#pragma once

// Line-delimited manifest I/O, statistics and finalization checks.
//
// One JSON object per line:
//   {"schema_version":1,"triplet_id":..,"ref_id":..,"ref_uri":..,"target_id":..,
//    "target_uri":..,"mod_text":..,"grain":"coarse|fine","split":"train|test",
//    "status":..,"eval_answers":[b,b,b]|null,"provenance":{..}}
// Optional: "token_count" (checked against the active tokenizer when present),
// "eval_rationale", "subset_ids".

#include <algorithm>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecir/core/tokenizer.hpp"
#include "finecir/core/types.hpp"

namespace finecir {

inline constexpr int kManifestSchemaVersion = 1;

class SchemaError : public std::runtime_error {
public:
    SchemaError(std::size_t line, std::string field, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ", field '" + field + "': " + what),
          line_(line),
          field_(std::move(field)) {}
    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline const std::set<std::string>& manifest_fields() {
    static const std::set<std::string> f = {
        "schema_version", "triplet_id", "ref_id",     "ref_uri",     "target_id",      "target_uri",
        "mod_text",       "grain",      "split",      "status",      "eval_answers",   "provenance",
        "token_count",    "eval_rationale", "subset_ids"};
    return f;
}

inline std::string require_string(const nlohmann::json& j, const char* field, std::size_t line) {
    if (!j.contains(field)) throw SchemaError(line, field, "missing");
    if (!j[field].is_string()) throw SchemaError(line, field, "expected string");
    return j[field].get<std::string>();
}

}  // namespace detail

/// Parses one record. `line` is 1-based and only used for error reports.
inline Triplet parse_triplet_record(const std::string& text, std::size_t line, const Tokenizer& tok) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(line, "<record>", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError(line, "<record>", "expected object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!detail::manifest_fields().count(it.key())) throw SchemaError(line, it.key(), "unknown field");

    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
        throw SchemaError(line, "schema_version", "missing or not an integer");
    if (j["schema_version"].get<int>() != kManifestSchemaVersion)
        throw SchemaError(line, "schema_version", "unsupported version " + j["schema_version"].dump());

    Triplet t;
    t.id = detail::require_string(j, "triplet_id", line);
    if (t.id.empty()) throw SchemaError(line, "triplet_id", "empty");
    auto split = parse_split(detail::require_string(j, "split", line));
    if (!split) throw SchemaError(line, "split", "expected train|test");
    t.ref = {detail::require_string(j, "ref_id", line), detail::require_string(j, "ref_uri", line), *split};
    t.target = {detail::require_string(j, "target_id", line), detail::require_string(j, "target_uri", line), *split};
    if (t.ref.id.empty()) throw SchemaError(line, "ref_id", "empty");
    if (t.target.id.empty()) throw SchemaError(line, "target_id", "empty");
    if (t.ref.uri.empty()) throw SchemaError(line, "ref_uri", "empty");
    if (t.target.uri.empty()) throw SchemaError(line, "target_uri", "empty");
    if (t.ref.id == t.target.id) throw SchemaError(line, "target_id", "reference and target are the same image");

    t.mod_text.text = detail::require_string(j, "mod_text", line);
    auto grain = parse_grain(detail::require_string(j, "grain", line));
    if (!grain) throw SchemaError(line, "grain", "expected coarse|fine");
    t.mod_text.grain = *grain;
    t.mod_text.token_count = tok.count(t.mod_text.text);
    if (j.contains("token_count")) {
        if (!j["token_count"].is_number_integer()) throw SchemaError(line, "token_count", "expected integer");
        if (j["token_count"].get<int>() != t.mod_text.token_count)
            throw SchemaError(line, "token_count",
                              "stored " + j["token_count"].dump() + " but " + tok.name() + " tokenizer counts " +
                                  std::to_string(t.mod_text.token_count));
    }

    auto status = parse_status(detail::require_string(j, "status", line));
    if (!status) throw SchemaError(line, "status", "unknown status");
    t.status = *status;

    if (!j.contains("eval_answers")) throw SchemaError(line, "eval_answers", "missing (use null)");
    if (!j["eval_answers"].is_null()) {
        const auto& a = j["eval_answers"];
        if (!a.is_array() || a.size() != 3) throw SchemaError(line, "eval_answers", "expected exactly 3 booleans");
        EvalRecord e;
        for (std::size_t i = 0; i < 3; ++i) {
            if (!a[i].is_boolean()) throw SchemaError(line, "eval_answers", "expected booleans");
            e.answers[i] = a[i].get<bool>();
        }
        if (j.contains("eval_rationale")) {
            if (!j["eval_rationale"].is_string()) throw SchemaError(line, "eval_rationale", "expected string");
            e.rationale = j["eval_rationale"].get<std::string>();
        }
        t.eval = e;
    } else if (j.contains("eval_rationale")) {
        throw SchemaError(line, "eval_rationale", "present without eval_answers");
    }

    if (!j.contains("provenance")) throw SchemaError(line, "provenance", "missing");
    if (!j["provenance"].is_object()) throw SchemaError(line, "provenance", "expected object");
    for (auto it = j["provenance"].begin(); it != j["provenance"].end(); ++it) {
        if (!it.value().is_string()) throw SchemaError(line, "provenance", "values must be strings");
        t.provenance[it.key()] = it.value().get<std::string>();
    }

    if (j.contains("subset_ids")) {
        if (!j["subset_ids"].is_array()) throw SchemaError(line, "subset_ids", "expected array of strings");
        for (const auto& s : j["subset_ids"]) {
            if (!s.is_string()) throw SchemaError(line, "subset_ids", "expected array of strings");
            t.subset_ids.push_back(s.get<std::string>());
        }
    }
    return t;
}

inline std::string triplet_record(const Triplet& t) {
    nlohmann::ordered_json j;
    j["schema_version"] = kManifestSchemaVersion;
    j["triplet_id"] = t.id;
    j["ref_id"] = t.ref.id;
    j["ref_uri"] = t.ref.uri;
    j["target_id"] = t.target.id;
    j["target_uri"] = t.target.uri;
    j["mod_text"] = t.mod_text.text;
    j["grain"] = to_string(t.mod_text.grain);
    j["split"] = to_string(t.split());
    j["status"] = to_string(t.status);
    j["token_count"] = t.mod_text.token_count;
    if (t.eval) {
        j["eval_answers"] = {t.eval->answers[0], t.eval->answers[1], t.eval->answers[2]};
        if (!t.eval->rationale.empty()) j["eval_rationale"] = t.eval->rationale;
    } else {
        j["eval_answers"] = nullptr;
    }
    j["provenance"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : t.provenance) j["provenance"][k] = v;
    if (!t.subset_ids.empty()) j["subset_ids"] = t.subset_ids;
    return j.dump();
}

/// Checks the cross-record invariants (unique triplet ids, one uri per image id).
inline void check_manifest_consistency(const DatasetManifest& m) {
    std::unordered_map<std::string, std::size_t> seen;
    std::unordered_map<std::string, std::string> uri_of;
    for (std::size_t i = 0; i < m.triplets.size(); ++i) {
        const auto& t = m.triplets[i];
        if (!seen.emplace(t.id, i + 1).second) throw SchemaError(i + 1, "triplet_id", "duplicate id " + t.id);
        for (const ImageRef* img : {&t.ref, &t.target}) {
            auto [it, fresh] = uri_of.emplace(img->id, img->uri);
            if (!fresh && it->second != img->uri)
                throw SchemaError(i + 1, img == &t.ref ? "ref_uri" : "target_uri",
                                  "image " + img->id + " already bound to a different uri");
        }
    }
}

inline DatasetManifest parse_manifest(std::istream& in, std::string name, const Tokenizer& tok) {
    DatasetManifest m;
    m.name = std::move(name);
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        m.triplets.push_back(parse_triplet_record(text, line, tok));
    }
    check_manifest_consistency(m);
    m.recount();
    return m;
}

inline std::string manifest_name_from_path(const std::string& path) {
    auto slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    auto dot = base.find('.');
    return dot == std::string::npos ? base : base.substr(0, dot);
}

inline DatasetManifest load_manifest(const std::string& path, const Tokenizer& tok = *default_tokenizer()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    return parse_manifest(in, manifest_name_from_path(path), tok);
}

inline void write_manifest(std::ostream& out, const DatasetManifest& m) {
    for (const auto& t : m.triplets) out << triplet_record(t) << '\n';
}

inline void save_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path);
    write_manifest(out, m);
    if (!out) throw IoError("write failed: " + path);
}

struct StatsReport {
    std::string name;
    std::string tokenizer;
    std::size_t train = 0;
    std::size_t test = 0;
    double mean_tokens = 0.0;
    int max_tokens = 0;

    nlohmann::ordered_json to_json() const {
        return {{"name", name},           {"tokenizer", tokenizer},   {"train", train},
                {"test", test},           {"mean_tokens", mean_tokens}, {"max_tokens", max_tokens}};
    }
};

inline StatsReport manifest_stats(const DatasetManifest& m, const Tokenizer& tok) {
    StatsReport r;
    r.name = m.name;
    r.tokenizer = tok.name();
    r.train = m.counts.train;
    r.test = m.counts.test;
    double sum = 0.0;
    for (const auto& t : m.triplets) {
        int n = tok.count(t.mod_text.text);
        sum += n;
        r.max_tokens = std::max(r.max_tokens, n);
    }
    if (!m.triplets.empty()) r.mean_tokens = sum / static_cast<double>(m.triplets.size());
    return r;
}

struct Violation {
    std::string triplet_id;
    std::string rule;
    std::string message;
    bool operator==(const Violation&) const = default;
};

inline std::vector<Violation> validate_finalized(const DatasetManifest& m, int token_limit = kDefaultTokenLimit) {
    std::vector<Violation> out;
    for (const auto& t : m.triplets) {
        if (t.status == Status::discarded) continue;
        if (t.status != Status::finalized)
            out.push_back({t.id, "stage", "status is " + std::string(to_string(t.status)) + ", expected finalized"});
        if (t.mod_text.grain != Grain::fine) out.push_back({t.id, "grain", "modification text is not fine-grained"});
        if (t.mod_text.token_count > token_limit)
            out.push_back({t.id, "token_limit",
                           std::to_string(t.mod_text.token_count) + " tokens exceeds the " +
                               std::to_string(token_limit) + "-token limit"});
    }
    return out;
}

}  // namespace finecir
