#pragma once

// Deterministic rule-based scene-graph parser. The grammar and lexicon are
// documented in docs/grammar.md; keep the two in sync.

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "finecir/core/tokenizer.hpp"
#include "finecir/sgparse/scene_graph.hpp"

namespace finecir::sg {

enum class Tag { det, adj, noun, pron, aux, rel, change, change_to, remove, verb, skip, boundary };

struct Lexicon {
    std::set<std::string, std::less<>> determiners{"a",     "an",    "the",  "this",  "that", "these", "those",
                                                   "its",   "their", "his",  "her",   "some", "any",   "each",
                                                   "every", "another"};
    std::set<std::string, std::less<>> pronouns{"it", "they", "them", "he", "she", "one", "ones"};
    std::set<std::string, std::less<>> auxiliaries{"is",     "are",   "was",     "were",   "be",     "been",
                                                   "being",  "should", "must",   "will",   "would",  "can",
                                                   "could",  "do",    "does",    "appear", "appears", "look",
                                                   "looks",  "seem",  "seems",   "become", "becomes", "stay",
                                                   "stays",  "remain", "remains", "now"};
    std::set<std::string, std::less<>> change_verbs{"change",  "changes", "changed", "turn",     "turns",
                                                    "replace", "replaces", "swap",   "switch",   "convert",
                                                    "transform"};
    std::set<std::string, std::less<>> change_targets{"to", "into", "with", "by"};
    std::set<std::string, std::less<>> remove_verbs{"remove", "removes", "delete", "erase", "eliminate", "drop",
                                                    "omit"};
    std::set<std::string, std::less<>> verbs{"make",  "makes",   "set",    "paint", "show",    "shows",   "showing",
                                             "put",   "place",   "placed", "give",  "gives",   "use",     "uses",
                                             "depict", "depicts", "feature", "features", "keep", "keeps", "let",
                                             "get",   "move",    "moved",  "shift", "add",     "adds",    "include",
                                             "insert", "display"};
    std::set<std::string, std::less<>> skip_words{"please", "instead", "also",   "only",  "very",  "slightly",
                                                  "more",   "much",    "so",     "same",  "similar", "overall",
                                                  "rather", "just",    "there",  "here",  "of",    "than",
                                                  "not",    "no",      "too",    "quite", "somewhat", "both"};
    std::set<std::string, std::less<>> boundary_words{"and", "but", "while", "then", "whereas"};
    std::vector<std::string> relations_multi{"in front of", "on top of", "next to", "close to",
                                             "to the left of", "to the right of", "on the left of",
                                             "on the right of", "in the middle of"};
    std::set<std::string, std::less<>> relations{"on",      "in",       "inside",   "under",   "below",  "beneath",
                                                 "above",   "over",     "behind",   "beside",  "near",   "with",
                                                 "without", "at",       "by",       "holding", "wearing", "carrying",
                                                 "riding",  "eating",   "has",      "have",    "having", "covering",
                                                 "against", "along",    "around",   "across",  "between", "among",
                                                 "toward",  "towards",  "facing",   "into",    "to",     "from"};
    std::set<std::string, std::less<>> adjectives{
        // colour
        "red", "orange", "yellow", "green", "blue", "purple", "pink", "brown", "black", "white", "gray", "grey",
        "beige", "navy", "teal", "gold", "golden", "silver", "cyan", "magenta", "maroon", "violet", "dark",
        "light", "bright", "pale", "colorful", "colourful",
        // size and shape
        "small", "medium", "large", "big", "tiny", "huge", "short", "long", "tall", "wide", "narrow", "thin",
        "thick", "little", "round",
        // pattern, cut, material
        "striped", "plain", "floral", "dotted", "checkered", "plaid", "patterned", "solid", "spotted", "fitted",
        "loose", "tight", "wooden", "metal", "leather", "denim", "cotton", "silk", "lace", "glass", "plastic",
        "shiny", "matte", "transparent",
        // state
        "old", "new", "young", "empty", "full", "open", "closed", "sunny", "cloudy", "wet", "dry", "fewer",
        "many", "several",
        // counts
        "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"};
    std::vector<std::string> adjective_suffixes{"less", "ful", "ish", "ous"};

    Tag classify(std::string_view w) const {
        if (w.size() == 1 && std::string_view(".,;:!?").find(w[0]) != std::string_view::npos) return Tag::boundary;
        if (boundary_words.count(w)) return Tag::boundary;
        if (determiners.count(w)) return Tag::det;
        if (pronouns.count(w)) return Tag::pron;
        if (auxiliaries.count(w)) return Tag::aux;
        if (change_verbs.count(w)) return Tag::change;
        if (remove_verbs.count(w)) return Tag::remove;
        if (verbs.count(w)) return Tag::verb;
        if (skip_words.count(w)) return Tag::skip;
        if (relations.count(w)) return Tag::rel;
        if (adjectives.count(w)) return Tag::adj;
        if (!w.empty() && std::isdigit(static_cast<unsigned char>(w[0]))) return Tag::adj;
        for (const auto& s : adjective_suffixes)
            if (w.size() > s.size() + 2 && w.substr(w.size() - s.size()) == s) return Tag::adj;
        if (!w.empty() && !std::isalnum(static_cast<unsigned char>(w[0])) &&
            static_cast<unsigned char>(w[0]) < 0x80)
            return Tag::skip;
        return Tag::noun;
    }
};

struct Word {
    std::string text;
    Tag tag;
};

class RuleParser final : public ParserBackend {
public:
    RuleParser() = default;
    explicit RuleParser(Lexicon lex) : lex_(std::move(lex)) {}

    SceneGraph parse(const std::string& text) const override {
        if (text.empty()) throw std::invalid_argument("parse_scene_graph: text must be non-empty");
        SceneGraph g;
        int focus = -1;
        for (const auto& clause : clauses(tag(text))) parse_clause(clause, g, focus);
        g.validate();
        return g;
    }

    std::string name() const override { return "rule"; }
    bool reentrant() const override { return true; }

    /// Tokenizes, merges multiword relations, and tags.
    std::vector<Word> tag(const std::string& text) const {
        auto toks = WhitespacePunctTokenizer{}.tokenize(text);
        std::vector<Word> out;
        for (std::size_t i = 0; i < toks.size();) {
            bool merged = false;
            for (const auto& m : lex_.relations_multi) {
                auto parts = split_words(m);
                if (i + parts.size() > toks.size()) continue;
                bool ok = true;
                for (std::size_t k = 0; k < parts.size() && ok; ++k) ok = toks[i + k] == parts[k];
                if (ok) {
                    out.push_back({m, Tag::rel});
                    i += parts.size();
                    merged = true;
                    break;
                }
            }
            if (merged) continue;
            out.push_back({toks[i], lex_.classify(toks[i])});
            ++i;
        }
        // "black and white": a conjunction between two adjectives does not end a clause.
        for (std::size_t i = 1; i + 1 < out.size(); ++i)
            if (out[i].tag == Tag::boundary && out[i].text == "and" && out[i - 1].tag == Tag::adj &&
                out[i + 1].tag == Tag::adj)
                out[i].tag = Tag::skip;
        return out;
    }

private:
    static std::vector<std::string> split_words(const std::string& s) {
        std::vector<std::string> out;
        std::size_t i = 0;
        while (i < s.size()) {
            auto j = s.find(' ', i);
            if (j == std::string::npos) j = s.size();
            out.push_back(s.substr(i, j - i));
            i = j + 1;
        }
        return out;
    }

    static std::vector<std::vector<Word>> clauses(const std::vector<Word>& words) {
        std::vector<std::vector<Word>> out(1);
        for (const auto& w : words) {
            if (w.tag == Tag::boundary) {
                if (!out.back().empty()) out.emplace_back();
            } else {
                out.back().push_back(w);
            }
        }
        if (out.back().empty()) out.pop_back();
        return out;
    }

    enum class Mode { plain, change, remove };

    void parse_clause(std::vector<Word> words, SceneGraph& g, int& focus) const {
        Mode mode = Mode::plain;
        int source = -1;          // change: the entity being changed
        bool in_target = false;   // change: after to/into/with
        int prev = -1;            // most recent entity in this clause
        std::optional<std::string> pending_rel;
        std::vector<std::string> pending_adj;
        std::vector<std::string> noun_run;

        auto attach = [&](int e, const std::vector<std::string>& adjs, bool negate) {
            for (const auto& a : adjs) g.add_attribute(e, negate ? "not " + a : a);
        };

        auto close_np = [&](int e) {
            const bool is_source = mode == Mode::change && source < 0;
            attach(e, pending_adj, is_source);
            pending_adj.clear();
            if (mode == Mode::change) {
                if (is_source) {
                    source = e;
                } else if (in_target && e != source) {
                    g.add_relation(source, "becomes", e);
                }
            } else if (mode == Mode::remove) {
                g.add_attribute(e, "removed");
            }
            if (pending_rel && prev >= 0 && prev != e) g.add_relation(prev, *pending_rel, e);
            pending_rel.reset();
            prev = e;
            focus = e;
        };

        auto flush_nouns = [&] {
            if (noun_run.empty()) return;
            std::string head = noun_run.front();
            for (std::size_t i = 1; i < noun_run.size(); ++i) head += " " + noun_run[i];
            noun_run.clear();
            close_np(g.add_entity(head));
        };

        for (const auto& w : words) {
            if (w.tag != Tag::noun) flush_nouns();
            switch (w.tag) {
                case Tag::noun:
                    noun_run.push_back(w.text);
                    break;
                case Tag::pron:
                    if (focus >= 0) close_np(focus);
                    break;
                case Tag::adj:
                    pending_adj.push_back(w.text);
                    break;
                case Tag::change:
                    mode = Mode::change;
                    break;
                case Tag::remove:
                    mode = Mode::remove;
                    break;
                case Tag::rel:
                    if (mode == Mode::change && source >= 0 && !in_target &&
                        lex_.change_targets.count(w.text)) {
                        in_target = true;
                        break;
                    }
                    // Predicate adjectives before a relation belong to the subject.
                    if (!pending_adj.empty() && prev >= 0) {
                        attach(prev, pending_adj, false);
                        pending_adj.clear();
                    }
                    if (prev < 0 && focus >= 0) prev = focus;
                    pending_rel = w.text;
                    break;
                default:
                    break;
            }
        }
        flush_nouns();
        if (!pending_adj.empty()) {
            int owner = mode == Mode::change && source >= 0 ? source : (prev >= 0 ? prev : focus);
            if (owner >= 0) attach(owner, pending_adj, false);
        }
    }

    Lexicon lex_;
};

}  // namespace finecir::sg
