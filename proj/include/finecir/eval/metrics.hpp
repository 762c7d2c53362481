#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace finecir::eval {

using Row = Eigen::RowVectorXd;

class EvalError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unit-normalized candidate tokens with unique ids.
class GalleryIndex {
public:
    void add(const std::string& id, const Row& v) {
        if (!pos_.emplace(id, ids_.size()).second) throw EvalError("duplicate gallery id " + id);
        if (dim_ < 0) dim_ = v.size();
        if (v.size() != dim_) throw EvalError("gallery row dimension mismatch for " + id);
        const double n = v.norm();
        if (!(n > 0.0) || !std::isfinite(n)) throw EvalError("gallery row for " + id + " has zero or non-finite norm");
        ids_.push_back(id);
        rows_.push_back(v / n);
    }

    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    Eigen::Index dim() const { return dim_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const Row& row(std::size_t i) const { return rows_[i]; }
    bool contains(const std::string& id) const { return pos_.count(id) > 0; }
    std::size_t index_of(const std::string& id) const {
        auto it = pos_.find(id);
        if (it == pos_.end()) throw EvalError("id " + id + " is not in the gallery");
        return it->second;
    }

    std::vector<double> similarities(const Row& q) const {
        if (q.size() != dim_) throw EvalError("query dimension does not match gallery");
        std::vector<double> s(ids_.size());
        for (std::size_t i = 0; i < ids_.size(); ++i) s[i] = rows_[i].dot(q);
        return s;
    }

private:
    std::vector<std::string> ids_;
    std::vector<Row> rows_;
    std::unordered_map<std::string, std::size_t> pos_;
    Eigen::Index dim_ = -1;
};

/// Similarities are compared at 1e-12 resolution, so cosines that are equal
/// in exact arithmetic tie even when summation order leaves them an ulp apart.
inline double score_key(double s) { return std::round(s * 1e12); }

/// Ids by descending cosine similarity, ties by ascending id. Ids in
/// `exclude` are left out.
inline std::vector<std::string> rank(const Row& query, const GalleryIndex& index,
                                     const std::set<std::string>& exclude = {}) {
    if (index.empty()) throw EvalError("rank: empty gallery");
    const double n = query.norm();
    const Row q = n > 0.0 ? Row(query / n) : query;
    auto sims = index.similarities(q);
    for (auto& v : sims) v = score_key(v);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < index.size(); ++i)
        if (!exclude.count(index.ids()[i])) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return index.ids()[a] < index.ids()[b];
    });
    std::vector<std::string> out;
    out.reserve(order.size());
    for (auto i : order) out.push_back(index.ids()[i]);
    return out;
}

/// 1-based position of `target` in rank(query, index, exclude).
inline int rank_of(const Row& query, const GalleryIndex& index, const std::string& target,
                   const std::set<std::string>& exclude = {}) {
    if (!index.contains(target) || exclude.count(target)) throw EvalError("target " + target + " absent from gallery");
    const auto order = rank(query, index, exclude);
    return static_cast<int>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
}

/// 1-based rank of `target` among the `subset` members only.
inline int subset_rank(const Row& query, const GalleryIndex& index, const std::vector<std::string>& subset,
                       const std::string& target) {
    if (std::find(subset.begin(), subset.end(), target) == subset.end())
        throw EvalError("target " + target + " missing from subset");
    std::set<std::string> members(subset.begin(), subset.end());
    std::set<std::string> exclude;
    for (const auto& id : index.ids())
        if (!members.count(id)) exclude.insert(id);
    for (const auto& id : subset)
        if (!index.contains(id)) throw EvalError("subset member " + id + " is not in the gallery");
    return rank_of(query, index, target, exclude);
}

inline double recall_at_k(const std::vector<int>& ranks, int k) {
    if (k < 1) throw EvalError("recall_at_k: K must be >= 1");
    if (ranks.empty()) return 0.0;
    std::size_t hits = 0;
    for (int r : ranks) {
        if (r < 1) throw EvalError("recall_at_k: ranks are 1-based");
        if (r <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

/// Per-query subset hit (1.0 or 0.0).
inline double recall_subset_at_k(const Row& query, const std::vector<std::string>& subset, const std::string& target,
                                 const GalleryIndex& index, int k) {
    if (k < 1) throw EvalError("recall_subset_at_k: K must be >= 1");
    return subset_rank(query, index, subset, target) <= k ? 1.0 : 0.0;
}

enum class Scale { fraction, percent };

inline void check_scale(double v, Scale s, const char* op) {
    const double hi = s == Scale::fraction ? 1.0 : 100.0;
    if (!(v >= 0.0 && v <= hi))
        throw EvalError(std::string(op) + ": value " + std::to_string(v) + " outside the " +
                        (s == Scale::fraction ? "[0,1]" : "[0,100]") + " scale");
}

/// (R@5 + R_subset@1) / 2.
inline double composite_avg_cirr(double r5, double rsub1, Scale s = Scale::percent) {
    check_scale(r5, s, "composite_avg_cirr");
    check_scale(rsub1, s, "composite_avg_cirr");
    return (r5 + rsub1) / 2.0;
}

/// Mean over the Dresses, Shirts and Tops&Tees categories.
inline double category_avg_fashioniq(double dresses, double shirts, double toptee, Scale s = Scale::percent) {
    for (double v : {dresses, shirts, toptee}) check_scale(v, s, "category_avg_fashioniq");
    return (dresses + shirts + toptee) / 3.0;
}

/// Two-decimal rendering of the exact binary value, correctly rounded (ties
/// to even on the exact value). 80.975 is stored as 80.97499999..., so it
/// prints as 80.97.
inline std::string format2(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
    return std::string(buf, r.ptr);
}

inline double round2(double v) {
    const auto s = format2(v);
    double out = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), out);
    return out;
}

struct MetricReport {
    std::map<int, double> recall;         // K -> fraction
    std::map<int, double> subset_recall;  // K -> fraction
    std::size_t queries = 0;
    std::size_t subset_queries = 0;

    std::optional<double> composite_cirr() const {
        if (!recall.count(5) || !subset_recall.count(1)) return std::nullopt;
        return composite_avg_cirr(100.0 * recall.at(5), 100.0 * subset_recall.at(1));
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["queries"] = queries;
        nlohmann::ordered_json r = nlohmann::ordered_json::object(), sr = nlohmann::ordered_json::object();
        for (auto [k, v] : recall) r["R@" + std::to_string(k)] = round2(100.0 * v);
        for (auto [k, v] : subset_recall) sr["Rsubset@" + std::to_string(k)] = round2(100.0 * v);
        j["recall"] = r;
        j["subset_queries"] = subset_queries;
        j["subset_recall"] = sr;
        if (auto c = composite_cirr()) j["avg"] = round2(*c);
        return j;
    }

    std::string table() const {
        std::ostringstream out;
        auto line = [&](const std::string& name, const std::string& value) {
            out << std::left << std::setw(13) << name << value << '\n';
        };
        line("metric", "value");
        for (auto [k, v] : recall) line("R@" + std::to_string(k), format2(100.0 * v));
        for (auto [k, v] : subset_recall) line("Rsubset@" + std::to_string(k), format2(100.0 * v));
        if (auto c = composite_cirr()) line("Avg", format2(*c));
        line("queries", std::to_string(queries));
        return out.str();
    }
};

struct QueryOutcome {
    int rank = 0;
    std::optional<int> subset_rank;
};

inline MetricReport summarize(const std::vector<QueryOutcome>& outcomes, const std::vector<int>& ks,
                              const std::vector<int>& subset_ks) {
    MetricReport rep;
    rep.queries = outcomes.size();
    std::vector<int> ranks, sranks;
    for (const auto& o : outcomes) {
        ranks.push_back(o.rank);
        if (o.subset_rank) sranks.push_back(*o.subset_rank);
    }
    rep.subset_queries = sranks.size();
    for (int k : ks) rep.recall[k] = recall_at_k(ranks, k);
    if (!sranks.empty())
        for (int k : subset_ks) rep.subset_recall[k] = recall_at_k(sranks, k);
    return rep;
}

}  // namespace finecir::eval
