#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace finecir {

enum class Split { train, test };
enum class Grain { coarse, fine };

/// Pipeline stage of a triplet. Declaration order is the stage order;
/// `discarded` is reachable from every state.
enum class Status { raw, sampled, selected, generated, refined, assessed, finalized, discarded };

inline constexpr int kDefaultTokenLimit = 77;

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline std::string_view to_string(Grain g) { return g == Grain::coarse ? "coarse" : "fine"; }

inline std::string_view to_string(Status s) {
    switch (s) {
        case Status::raw: return "raw";
        case Status::sampled: return "sampled";
        case Status::selected: return "selected";
        case Status::generated: return "generated";
        case Status::refined: return "refined";
        case Status::assessed: return "assessed";
        case Status::finalized: return "finalized";
        case Status::discarded: return "discarded";
    }
    return "?";
}

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    return std::nullopt;
}

inline std::optional<Grain> parse_grain(std::string_view s) {
    if (s == "coarse") return Grain::coarse;
    if (s == "fine") return Grain::fine;
    return std::nullopt;
}

inline std::optional<Status> parse_status(std::string_view s) {
    for (int i = 0; i <= static_cast<int>(Status::discarded); ++i) {
        auto st = static_cast<Status>(i);
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

/// True when moving from `from` to `to` respects the stage order.
/// Staying put is allowed; any state may move to discarded.
inline bool is_forward_transition(Status from, Status to) {
    if (to == Status::discarded) return true;
    if (from == Status::discarded) return false;
    return static_cast<int>(to) >= static_cast<int>(from);
}

class TransitionError : public std::logic_error {
public:
    TransitionError(Status from, Status to)
        : std::logic_error("illegal status transition " + std::string(to_string(from)) + " -> " +
                           std::string(to_string(to))) {}
};

struct ImageRef {
    std::string id;
    std::string uri;
    Split split = Split::train;

    bool operator==(const ImageRef&) const = default;
};

struct ModText {
    std::string text;
    int token_count = 0;
    Grain grain = Grain::coarse;

    bool operator==(const ModText&) const = default;
};

/// Answers to the three pair-check questions plus the checker's free text.
struct EvalRecord {
    std::array<bool, 3> answers{};
    std::string rationale;

    int yes_count() const {
        int n = 0;
        for (bool a : answers) n += a ? 1 : 0;
        return n;
    }
    bool operator==(const EvalRecord&) const = default;
};

struct Triplet {
    std::string id;
    ImageRef ref;
    ImageRef target;
    ModText mod_text;
    std::optional<EvalRecord> eval;
    Status status = Status::raw;
    /// Free-form audit trail: source, discard stage/rule, generation branch...
    std::map<std::string, std::string> provenance;
    /// Hard-negative subset for R_subset@K; empty when the benchmark has none.
    std::vector<std::string> subset_ids;

    Split split() const { return ref.split; }

    void advance(Status to) {
        if (!is_forward_transition(status, to)) throw TransitionError(status, to);
        status = to;
    }

    void discard(std::string stage, std::string rule) {
        advance(Status::discarded);
        provenance["discard_stage"] = std::move(stage);
        provenance["discard_rule"] = std::move(rule);
    }

    bool operator==(const Triplet&) const = default;
};

struct SplitCounts {
    std::size_t train = 0;
    std::size_t test = 0;
    bool operator==(const SplitCounts&) const = default;
};

struct DatasetManifest {
    std::string name;
    std::vector<Triplet> triplets;
    SplitCounts counts;

    void recount() {
        counts = {};
        for (const auto& t : triplets) (t.split() == Split::train ? counts.train : counts.test)++;
    }
    bool operator==(const DatasetManifest&) const = default;
};

}  // namespace finecir
