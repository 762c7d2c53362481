#pragma once

// Durable review queue. State lives in `dir/snapshot.json` (compacted) plus
// `dir/log.jsonl` (append-only, fsync'd per record); opening a store loads
// the snapshot and replays the log. An empty `dir` keeps everything in memory.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecir/core/tokenizer.hpp"
#include "finecir/core/types.hpp"

namespace finecir::review {

enum class Verdict { retain, discard, edit };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::retain: return "retain";
        case Verdict::discard: return "discard";
        default: return "edit";
    }
}

inline std::optional<Verdict> parse_verdict(const std::string& s) {
    if (s == "retain") return Verdict::retain;
    if (s == "discard") return Verdict::discard;
    if (s == "edit") return Verdict::edit;
    return std::nullopt;
}

/// Review stages and the verdicts each admits.
inline const std::map<std::string, std::set<Verdict>>& stage_verdicts() {
    static const std::map<std::string, std::set<Verdict>> m{
        {"pair_check", {Verdict::retain, Verdict::discard}},
        {"refine", {Verdict::edit, Verdict::discard}},
        {"assess_text", {Verdict::retain, Verdict::edit, Verdict::discard}},
        {"assess_image", {Verdict::retain, Verdict::edit, Verdict::discard}},
        {"compress", {Verdict::edit, Verdict::discard}},
    };
    return m;
}

inline bool is_stage(const std::string& s) { return stage_verdicts().count(s) > 0; }

inline std::string item_id(const std::string& stage, const std::string& triplet_id) { return stage + ":" + triplet_id; }

struct Decision {
    std::string item_id;
    Verdict verdict = Verdict::retain;
    std::optional<std::string> edited_text;
    std::string reviewer;
    std::int64_t timestamp = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j{{"item_id", item_id}, {"verdict", to_string(verdict)}};
        j["edited_text"] = edited_text ? nlohmann::ordered_json(*edited_text) : nlohmann::ordered_json();
        j["reviewer"] = reviewer;
        j["timestamp"] = timestamp;
        return j;
    }

    static Decision from_json(const nlohmann::json& j) {
        Decision d;
        d.item_id = j.at("item_id").get<std::string>();
        auto v = parse_verdict(j.at("verdict").get<std::string>());
        if (!v) throw std::invalid_argument("unknown verdict " + j.at("verdict").dump());
        d.verdict = *v;
        if (j.contains("edited_text") && !j.at("edited_text").is_null())
            d.edited_text = j.at("edited_text").get<std::string>();
        d.reviewer = j.value("reviewer", std::string{});
        d.timestamp = j.value("timestamp", std::int64_t{0});
        return d;
    }
};

enum class ItemState { open, decided };

struct ReviewItem {
    std::string id;
    std::string stage;
    std::string triplet_id;
    nlohmann::ordered_json payload = nlohmann::ordered_json::object();
    std::int64_t created_at = 0;
    std::uint64_t sequence = 0;
    ItemState state = ItemState::open;
    std::optional<Decision> decision;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j{{"id", id},
                                 {"stage", stage},
                                 {"triplet_id", triplet_id},
                                 {"payload", payload},
                                 {"created_at", created_at},
                                 {"sequence", sequence},
                                 {"state", state == ItemState::open ? "open" : "decided"}};
        j["decision"] = decision ? decision->to_json() : nlohmann::ordered_json();
        j["allowed_verdicts"] = nlohmann::ordered_json::array();
        for (auto v : stage_verdicts().at(stage)) j["allowed_verdicts"].push_back(to_string(v));
        return j;
    }

    static ReviewItem from_json(const nlohmann::json& j) {
        ReviewItem it;
        it.id = j.at("id").get<std::string>();
        it.stage = j.at("stage").get<std::string>();
        it.triplet_id = j.at("triplet_id").get<std::string>();
        it.payload = j.at("payload");
        it.created_at = j.at("created_at").get<std::int64_t>();
        it.sequence = j.at("sequence").get<std::uint64_t>();
        it.state = j.at("state").get<std::string>() == "open" ? ItemState::open : ItemState::decided;
        if (j.contains("decision") && !j.at("decision").is_null()) it.decision = Decision::from_json(j.at("decision"));
        return it;
    }
};

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class DuplicateItem : public StoreError {
public:
    using StoreError::StoreError;
};
class ItemNotFound : public StoreError {
public:
    using StoreError::StoreError;
};
class AlreadyDecided : public StoreError {
public:
    using StoreError::StoreError;
};
/// Verdict not admitted by the stage, missing or superfluous edited text,
/// or a compress edit over the token limit.
class InvalidDecision : public StoreError {
public:
    using StoreError::StoreError;
};

/// Milliseconds source for created_at and decision timestamps.
using TimeSource = std::function<std::int64_t()>;

inline TimeSource system_time_ms() {
    return [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    };
}

/// Returns 1, 2, 3, ... on successive calls; keeps files byte-stable across runs.
inline TimeSource logical_time() {
    auto n = std::make_shared<std::int64_t>(0);
    return [n] { return ++*n; };
}

struct StoreOptions {
    int token_limit = kDefaultTokenLimit;
    std::shared_ptr<const Tokenizer> tokenizer = default_tokenizer();
    TimeSource clock = system_time_ms();
    bool fsync = true;
};

class ReviewStore {
public:
    explicit ReviewStore(std::string dir = {}, StoreOptions opt = {}) : dir_(std::move(dir)), opt_(std::move(opt)) {
        if (!opt_.tokenizer) opt_.tokenizer = default_tokenizer();
        if (!opt_.clock) opt_.clock = system_time_ms();
        if (!dir_.empty()) open();
    }

    ReviewStore(const ReviewStore&) = delete;
    ReviewStore& operator=(const ReviewStore&) = delete;
    ~ReviewStore() {
        if (fd_ >= 0) ::close(fd_);
    }

    const std::string& dir() const { return dir_; }
    int token_limit() const { return opt_.token_limit; }
    const Tokenizer& tokenizer() const { return *opt_.tokenizer; }

    /// Adds an open item with id "<stage>:<triplet_id>"; durable on return.
    std::string enqueue(const std::string& stage, const std::string& triplet_id, nlohmann::ordered_json payload) {
        if (!is_stage(stage)) throw StoreError("unknown review stage '" + stage + "'");
        if (triplet_id.empty()) throw StoreError("review item needs a triplet id");
        std::lock_guard<std::mutex> lock(mu_);
        ReviewItem it;
        it.id = item_id(stage, triplet_id);
        if (items_.count(it.id)) throw DuplicateItem("review item " + it.id + " already exists");
        it.stage = stage;
        it.triplet_id = triplet_id;
        it.payload = std::move(payload);
        it.created_at = opt_.clock();
        it.sequence = ++sequence_;
        append({{"op", "enqueue"}, {"item", it.to_json()}});
        items_.emplace(it.id, std::move(it));
        return item_id(stage, triplet_id);
    }

    /// Oldest open item of `stage`, without changing it.
    std::optional<ReviewItem> next(const std::string& stage) const {
        if (!is_stage(stage)) throw StoreError("unknown review stage '" + stage + "'");
        std::lock_guard<std::mutex> lock(mu_);
        const ReviewItem* best = nullptr;
        for (const auto& [_, it] : items_)
            if (it.stage == stage && it.state == ItemState::open && (!best || it.sequence < best->sequence)) best = &it;
        if (!best) return std::nullopt;
        return *best;
    }

    std::optional<ReviewItem> get(const std::string& id) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = items_.find(id);
        if (it == items_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<ReviewItem> find(const std::string& stage, const std::string& triplet_id) const {
        return get(item_id(stage, triplet_id));
    }

    /// Records a verdict; the first decision wins, later ones throw AlreadyDecided.
    ReviewItem decide(Decision d) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = items_.find(d.item_id);
        if (it == items_.end()) throw ItemNotFound("no review item " + d.item_id);
        auto& item = it->second;
        if (item.state == ItemState::decided) throw AlreadyDecided("review item " + d.item_id + " is already decided");
        validate(item, d);
        d.timestamp = opt_.clock();
        append({{"op", "decide"}, {"decision", d.to_json()}});
        item.state = ItemState::decided;
        item.decision = std::move(d);
        return item;
    }

    /// Open counts for every stage (zero included).
    std::map<std::string, std::size_t> open_counts() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::map<std::string, std::size_t> out;
        for (const auto& [s, _] : stage_verdicts()) out[s] = 0;
        for (const auto& [_, it] : items_)
            if (it.state == ItemState::open) ++out[it.stage];
        return out;
    }

    /// All items in enqueue order.
    std::vector<ReviewItem> items() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::vector<ReviewItem> out;
        for (const auto& [_, it] : items_) out.push_back(it);
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sequence < b.sequence; });
        return out;
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return items_.size();
    }

    /// Writes the snapshot atomically, then truncates the log.
    void compact() {
        std::lock_guard<std::mutex> lock(mu_);
        if (dir_.empty()) return;
        nlohmann::ordered_json snap{{"sequence", sequence_}, {"items", nlohmann::ordered_json::array()}};
        std::vector<const ReviewItem*> sorted;
        for (const auto& [_, it] : items_) sorted.push_back(&it);
        std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->sequence < b->sequence; });
        for (const auto* it : sorted) snap["items"].push_back(it->to_json());
        const auto path = snapshot_path(), tmp = path + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << snap.dump() << '\n';
            if (!out) throw StoreError("cannot write snapshot " + tmp);
        }
        if (std::rename(tmp.c_str(), path.c_str()) != 0) throw StoreError("cannot install snapshot " + path);
        if (::ftruncate(fd_, 0) != 0) throw StoreError("cannot truncate " + log_path());
        if (opt_.fsync) ::fsync(fd_);
    }

    std::string log_path() const { return dir_ + "/log.jsonl"; }
    std::string snapshot_path() const { return dir_ + "/snapshot.json"; }

private:
    void validate(const ReviewItem& item, const Decision& d) const {
        const auto& allowed = stage_verdicts().at(item.stage);
        if (!allowed.count(d.verdict))
            throw InvalidDecision("verdict '" + to_string(d.verdict) + "' is not allowed for " + item.stage + " items");
        if (d.verdict == Verdict::edit) {
            if (!d.edited_text || d.edited_text->find_first_not_of(" \t\r\n") == std::string::npos)
                throw InvalidDecision("edit verdict requires a non-empty edited_text");
            const int n = opt_.tokenizer->count(*d.edited_text);
            if (item.stage == "compress" && n > opt_.token_limit)
                throw InvalidDecision("edited text has " + std::to_string(n) + " tokens; finalized texts must have at most " +
                                      std::to_string(opt_.token_limit) + " tokens");
        } else if (d.edited_text) {
            throw InvalidDecision("edited_text is only accepted with the edit verdict");
        }
    }

    void open() {
        namespace fs = std::filesystem;
        fs::create_directories(dir_);
        if (fs::exists(snapshot_path())) {
            std::ifstream in(snapshot_path());
            auto snap = nlohmann::json::parse(in);
            sequence_ = snap.at("sequence").get<std::uint64_t>();
            for (const auto& j : snap.at("items")) {
                auto it = ReviewItem::from_json(j);
                items_.emplace(it.id, std::move(it));
            }
        }
        if (fs::exists(log_path())) {
            std::ifstream in(log_path());
            std::string line;
            std::size_t n = 0;
            while (std::getline(in, line)) {
                ++n;
                if (line.empty()) continue;
                nlohmann::json rec;
                try {
                    rec = nlohmann::json::parse(line);
                } catch (const nlohmann::json::exception&) {
                    // A torn final record from a crash mid-append is dropped.
                    if (in.peek() == std::char_traits<char>::eof()) break;
                    throw StoreError(log_path() + ":" + std::to_string(n) + ": corrupt record");
                }
                replay(rec);
            }
        }
        fd_ = ::open(log_path().c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        if (fd_ < 0) throw StoreError("cannot open " + log_path());
    }

    void replay(const nlohmann::json& rec) {
        const auto op = rec.at("op").get<std::string>();
        if (op == "enqueue") {
            auto it = ReviewItem::from_json(rec.at("item"));
            sequence_ = std::max(sequence_, it.sequence);
            items_[it.id] = std::move(it);
        } else if (op == "decide") {
            auto d = Decision::from_json(rec.at("decision"));
            auto it = items_.find(d.item_id);
            if (it == items_.end()) throw StoreError("log decides unknown item " + d.item_id);
            it->second.state = ItemState::decided;
            it->second.decision = std::move(d);
        } else {
            throw StoreError("unknown log op " + op);
        }
    }

    void append(const nlohmann::ordered_json& rec) {
        if (dir_.empty()) return;
        const std::string line = rec.dump() + "\n";
        std::size_t off = 0;
        while (off < line.size()) {
            const auto w = ::write(fd_, line.data() + off, line.size() - off);
            if (w < 0) throw StoreError("write failed on " + log_path());
            off += static_cast<std::size_t>(w);
        }
        if (opt_.fsync && ::fsync(fd_) != 0) throw StoreError("fsync failed on " + log_path());
    }

    std::string dir_;
    StoreOptions opt_;
    mutable std::mutex mu_;
    std::map<std::string, ReviewItem> items_;
    std::uint64_t sequence_ = 0;
    int fd_ = -1;
};

}  // namespace finecir::review
