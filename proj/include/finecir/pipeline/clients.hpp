#pragma once

// Multimodal LLM client contract, reply parsers, and deterministic mocks.
// Mocks are pure functions of (template key, inputs); their rules are
// documented on each class so tests can compute expected outputs by hand.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "finecir/core/hash.hpp"
#include "finecir/core/tokenizer.hpp"
#include "finecir/core/types.hpp"

namespace finecir::pipeline {

enum class Role { pair_checker, finemt_generator, refiner, compressor };

inline std::string to_string(Role r) {
    switch (r) {
        case Role::pair_checker: return "pair_checker";
        case Role::finemt_generator: return "finemt_generator";
        case Role::refiner: return "refiner";
        default: return "compressor";
    }
}

class ClientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A reply that does not follow the template's answer format. `raw` holds
/// the reply verbatim.
class ReplyParseError : public std::runtime_error {
public:
    ReplyParseError(const std::string& what, std::string raw) : std::runtime_error(what), raw(std::move(raw)) {}
    std::string raw;
};

struct MllmRequest {
    std::string template_key;
    std::string prompt;
    std::vector<ImageRef> images;
    /// Structured inputs the prompt was rendered from (ids, texts, yes count).
    std::map<std::string, std::string> inputs;

    const std::string& input(const std::string& k) const {
        auto it = inputs.find(k);
        if (it == inputs.end()) throw ClientError("request for " + template_key + " lacks input '" + k + "'");
        return it->second;
    }
};

struct MllmReply {
    std::string text;
    std::string model;
};

class MllmClient {
public:
    virtual ~MllmClient() = default;
    virtual Role role() const = 0;
    virtual bool deterministic() const = 0;
    virtual std::string name() const = 0;
    virtual MllmReply invoke(const MllmRequest& req) const = 0;
};

struct ClientSet {
    std::shared_ptr<const MllmClient> pair_checker;
    std::shared_ptr<const MllmClient> generator;
    std::shared_ptr<const MllmClient> refiner;
    std::shared_ptr<const MllmClient> compressor;

    bool deterministic() const {
        for (const auto* c : {pair_checker.get(), generator.get(), refiner.get(), compressor.get()})
            if (c && !c->deterministic()) return false;
        return true;
    }
};

// ---------------------------------------------------------------- parsing

/// First three yes/no words of the reply, case-insensitive.
inline std::array<bool, 3> parse_yes_no(const std::string& reply) {
    std::vector<bool> out;
    for (const auto& tok : WhitespacePunctTokenizer{}.tokenize(reply)) {
        if (tok == "yes") out.push_back(true);
        else if (tok == "no") out.push_back(false);
        if (out.size() == 3) return {out[0], out[1], out[2]};
    }
    throw ReplyParseError("pair check reply has " + std::to_string(out.size()) + " yes/no answers, expected 3",
                          reply);
}

/// Sentences ending at '.', '!' or '?' followed by whitespace or the end.
/// Surrounding whitespace is trimmed; empty sentences are dropped.
inline std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        const auto b = cur.find_first_not_of(" \t\r\n");
        if (b != std::string::npos) {
            const auto e = cur.find_last_not_of(" \t\r\n");
            out.push_back(cur.substr(b, e - b + 1));
        }
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        cur += text[i];
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))))
            flush();
    }
    flush();
    return out;
}

inline std::string join_sentences(const std::vector<std::string>& s) {
    std::string out;
    for (const auto& x : s) {
        if (!out.empty()) out += ' ';
        out += x;
    }
    return out;
}

/// "REMOVE: 2,4" or "REMOVE: none" -> 1-based sentence numbers.
inline std::vector<int> parse_remove_list(const std::string& reply, std::size_t sentence_count) {
    const auto pos = reply.find("REMOVE:");
    if (pos == std::string::npos) throw ReplyParseError("refiner reply lacks a REMOVE: line", reply);
    std::string rest = reply.substr(pos + 7);
    rest = rest.substr(0, rest.find('\n'));
    std::vector<int> out;
    std::string word;
    auto take = [&] {
        if (word.empty()) return;
        if (word == "none") {
            word.clear();
            return;
        }
        int n = 0;
        for (char c : word) {
            if (!std::isdigit(static_cast<unsigned char>(c)))
                throw ReplyParseError("refiner reply has non-numeric entry '" + word + "'", reply);
            n = n * 10 + (c - '0');
        }
        if (n < 1 || static_cast<std::size_t>(n) > sentence_count)
            throw ReplyParseError("refiner reply names sentence " + word + " of " + std::to_string(sentence_count),
                                  reply);
        out.push_back(n);
        word.clear();
    };
    for (char c : rest) {
        if (c == ',' || std::isspace(static_cast<unsigned char>(c))) take();
        else word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    take();
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------- mocks

/// Answer i is Yes iff byte i of fnv1a64(ref_id + "|" + target_id) is >= 64.
/// `overrides` maps "ref|target" to fixed answers.
class MockPairChecker final : public MllmClient {
public:
    explicit MockPairChecker(std::map<std::string, std::array<bool, 3>> overrides = {})
        : overrides_(std::move(overrides)) {}

    static std::array<bool, 3> rule(const std::string& ref_id, const std::string& target_id) {
        const auto h = fnv1a64(ref_id + "|" + target_id);
        std::array<bool, 3> a{};
        for (int i = 0; i < 3; ++i) a[static_cast<std::size_t>(i)] = ((h >> (8 * i)) & 0xFFu) >= 64u;
        return a;
    }

    Role role() const override { return Role::pair_checker; }
    bool deterministic() const override { return true; }
    std::string name() const override { return "mock-pair-checker"; }

    MllmReply invoke(const MllmRequest& req) const override {
        const auto& r = req.input("ref_id");
        const auto& t = req.input("target_id");
        auto it = overrides_.find(r + "|" + t);
        const auto a = it != overrides_.end() ? it->second : rule(r, t);
        std::string text;
        for (bool b : a) text += b ? "Yes. " : "No. ";
        text += "\nRationale: hash rule on " + r + "|" + t + ".";
        return {text, name()};
    }

private:
    std::map<std::string, std::array<bool, 3>> overrides_;
};

/// Output = base + branch sentences, base being the coarse text (with a
/// final period) or a default sentence. Conservative branch (2 yes): one
/// fixed sentence. Thorough branch (3 yes): variant
/// v = (fnv1a64("gen|" + ref + "|" + target) >> 16) % 4 selects
///   0: kBrighter
///   1: kBrighter kTurn
///   2: kHalluc kWarmer        (kHalluc carries the HALLUC marker)
///   3: kLongA kLongB          (pushes most texts past 77 tokens)
class MockGenerator final : public MllmClient {
public:
    static constexpr const char* kDefaultBase = "Make the reference look like the target.";
    static constexpr const char* kConservative = "The colors differ slightly.";
    static constexpr const char* kBrighter = "The background becomes brighter.";
    static constexpr const char* kTurn = "The main object turns slightly to the left.";
    static constexpr const char* kHalluc = "A HALLUC banner floats above the scene.";
    static constexpr const char* kWarmer = "The lighting becomes warmer.";
    static constexpr const char* kLongA =
        "The overall composition shifts so that the main object sits a little closer to the center of the frame, "
        "with more empty space visible on the left side and a softer shadow falling toward the lower right corner.";
    static constexpr const char* kLongB =
        "Small details also change: the edges of the object look sharper, the surface shows a faint texture that "
        "was not there before, and a thin outline now separates the object from the background behind it.";

    static int variant(const std::string& ref_id, const std::string& target_id) {
        return static_cast<int>((fnv1a64("gen|" + ref_id + "|" + target_id) >> 16) % 4);
    }

    static std::string base(const std::string& coarse) {
        auto b = coarse;
        while (!b.empty() && std::isspace(static_cast<unsigned char>(b.back()))) b.pop_back();
        if (b.empty()) return kDefaultBase;
        b[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(b[0])));
        if (b.back() != '.' && b.back() != '!' && b.back() != '?') b += '.';
        return b;
    }

    static std::string rule(const std::string& ref_id, const std::string& target_id, int yes_count,
                            const std::string& coarse) {
        std::string out = base(coarse);
        if (yes_count == 2) return out + " " + kConservative;
        switch (variant(ref_id, target_id)) {
            case 0: return out + " " + kBrighter;
            case 1: return out + " " + kBrighter + " " + kTurn;
            case 2: return out + " " + kHalluc + " " + kWarmer;
            default: return out + " " + kLongA + " " + kLongB;
        }
    }

    Role role() const override { return Role::finemt_generator; }
    bool deterministic() const override { return true; }
    std::string name() const override { return "mock-generator"; }

    MllmReply invoke(const MllmRequest& req) const override {
        const int yes = std::stoi(req.input("yes_count"));
        auto c = req.inputs.find("coarse_text");
        return {rule(req.input("ref_id"), req.input("target_id"), yes, c == req.inputs.end() ? "" : c->second),
                name()};
    }
};

/// refine@v1: flags every sentence containing "HALLUC".
/// assess_refine@v1: drops the last sentence when there is more than one.
class MockRefiner final : public MllmClient {
public:
    static std::vector<int> flagged(const std::string& text) {
        std::vector<int> out;
        const auto s = split_sentences(text);
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i].find("HALLUC") != std::string::npos) out.push_back(static_cast<int>(i + 1));
        return out;
    }

    static std::string drop_last(const std::string& text) {
        auto s = split_sentences(text);
        if (s.size() > 1) s.pop_back();
        return join_sentences(s);
    }

    Role role() const override { return Role::refiner; }
    bool deterministic() const override { return true; }
    std::string name() const override { return "mock-refiner"; }

    MllmReply invoke(const MllmRequest& req) const override {
        const auto& text = req.input("text");
        if (req.template_key.rfind("assess_refine@", 0) == 0) return {drop_last(text), name()};
        const auto f = flagged(text);
        std::string line = "REMOVE: ";
        if (f.empty()) line += "none";
        for (std::size_t i = 0; i < f.size(); ++i) line += (i ? "," : "") + std::to_string(f[i]);
        return {line, name()};
    }
};

/// Drops sentences from the end until the text fits the limit or a single
/// sentence remains.
class MockCompressor final : public MllmClient {
public:
    explicit MockCompressor(std::shared_ptr<const Tokenizer> tok = default_tokenizer()) : tok_(std::move(tok)) {}

    static std::string rule(const std::string& text, int limit, const Tokenizer& tok) {
        auto s = split_sentences(text);
        while (s.size() > 1 && tok.count(join_sentences(s)) > limit) s.pop_back();
        return join_sentences(s);
    }

    Role role() const override { return Role::compressor; }
    bool deterministic() const override { return true; }
    std::string name() const override { return "mock-compressor"; }

    MllmReply invoke(const MllmRequest& req) const override {
        return {rule(req.input("text"), std::stoi(req.input("limit")), *tok_), name()};
    }

private:
    std::shared_ptr<const Tokenizer> tok_;
};

inline ClientSet mock_clients(std::shared_ptr<const Tokenizer> tok = default_tokenizer()) {
    return {std::make_shared<MockPairChecker>(), std::make_shared<MockGenerator>(), std::make_shared<MockRefiner>(),
            std::make_shared<MockCompressor>(std::move(tok))};
}

}  // namespace finecir::pipeline
