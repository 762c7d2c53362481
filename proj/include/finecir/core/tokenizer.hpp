#pragma once

#include <algorithm>
#include <cctype>
#include <climits>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace finecir {

/// Counts tokens against an encoder's length budget.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
    virtual int count(std::string_view text) const { return static_cast<int>(tokenize(text).size()); }
    virtual std::string name() const = 0;
};

namespace detail {
inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }
}  // namespace detail

/// Default tokenizer: maximal runs of alphanumerics (plus non-ASCII bytes and
/// word-internal apostrophes) are one token; every other non-space character
/// is a token on its own. Lowercases its output.
class WhitespacePunctTokenizer final : public Tokenizer {
public:
    std::vector<std::string> tokenize(std::string_view text) const override {
        std::vector<std::string> out;
        std::size_t i = 0;
        while (i < text.size()) {
            auto c = static_cast<unsigned char>(text[i]);
            if (std::isspace(c)) {
                ++i;
                continue;
            }
            if (detail::is_word_byte(c)) {
                std::string tok;
                while (i < text.size()) {
                    auto d = static_cast<unsigned char>(text[i]);
                    if (detail::is_word_byte(d)) {
                        tok.push_back(static_cast<char>(std::tolower(d)));
                        ++i;
                    } else if (d == '\'' && i + 1 < text.size() &&
                               detail::is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
                        tok.push_back('\'');
                        ++i;
                    } else {
                        break;
                    }
                }
                out.push_back(std::move(tok));
            } else {
                out.emplace_back(1, static_cast<char>(c));
                ++i;
            }
        }
        return out;
    }
    std::string name() const override { return "whitespace_punct"; }
};

/// Byte-pair tokenizer in the CLIP convention: lowercase, pre-split into
/// letters runs / single digits / punctuation runs / contractions, byte-level
/// symbol mapping, `</w>` end-of-word marker, greedy lowest-rank merges.
/// `count` includes the start/end markers when `count_special` is set, which
/// is how the 77-token context limit is measured.
class BpeTokenizer final : public Tokenizer {
public:
    /// `merges` lines are "left right" pairs ordered by priority; a leading
    /// "#version" line is skipped.
    explicit BpeTokenizer(std::vector<std::pair<std::string, std::string>> merges, bool count_special = true)
        : count_special_(count_special) {
        build_byte_map();
        for (std::size_t r = 0; r < merges.size(); ++r)
            ranks_.emplace(merges[r].first + ' ' + merges[r].second, static_cast<int>(r));
    }

    static BpeTokenizer from_file(const std::string& path, bool count_special = true) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open BPE merges file: " + path);
        std::vector<std::pair<std::string, std::string>> merges;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line.rfind("#version", 0) == 0) continue;
            auto sp = line.find(' ');
            if (sp == std::string::npos) throw std::runtime_error("malformed merges line: " + line);
            merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
        }
        return BpeTokenizer(std::move(merges), count_special);
    }

    std::vector<std::string> tokenize(std::string_view text) const override {
        std::vector<std::string> out;
        for (const auto& word : pre_split(text)) {
            auto pieces = bpe(word);
            out.insert(out.end(), pieces.begin(), pieces.end());
        }
        return out;
    }

    int count(std::string_view text) const override {
        return static_cast<int>(tokenize(text).size()) + (count_special_ ? 2 : 0);
    }

    std::string name() const override { return "bpe"; }

    static std::vector<std::string> pre_split(std::string_view text) {
        std::string low;
        low.reserve(text.size());
        for (char c : text) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        std::vector<std::string> out;
        static constexpr std::string_view contractions[] = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
        std::size_t i = 0;
        auto is_letter = [](unsigned char c) { return std::isalpha(c) || c >= 0x80; };
        while (i < low.size()) {
            auto c = static_cast<unsigned char>(low[i]);
            if (std::isspace(c)) {
                ++i;
                continue;
            }
            if (c == '\'') {
                bool matched = false;
                for (auto con : contractions) {
                    if (std::string_view(low).substr(i, con.size()) == con) {
                        out.emplace_back(con);
                        i += con.size();
                        matched = true;
                        break;
                    }
                }
                if (matched) continue;
            }
            std::size_t j = i;
            if (is_letter(c)) {
                while (j < low.size() && is_letter(static_cast<unsigned char>(low[j]))) ++j;
            } else if (std::isdigit(c)) {
                j = i + 1;
            } else {
                while (j < low.size()) {
                    auto d = static_cast<unsigned char>(low[j]);
                    if (std::isspace(d) || is_letter(d) || std::isdigit(d)) break;
                    ++j;
                }
            }
            out.push_back(low.substr(i, j - i));
            i = j;
        }
        return out;
    }

private:
    void build_byte_map() {
        // GPT-2/CLIP byte->unicode table: printable latin-1 bytes map to
        // themselves, the rest to code points from 256 upward.
        std::vector<int> bs;
        for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
        for (int b = 0xA1; b <= 0xAC; ++b) bs.push_back(b);
        for (int b = 0xAE; b <= 0xFF; ++b) bs.push_back(b);
        std::vector<int> cs = bs;
        int n = 0;
        for (int b = 0; b < 256; ++b) {
            if (std::find(bs.begin(), bs.end(), b) == bs.end()) {
                bs.push_back(b);
                cs.push_back(256 + n++);
            }
        }
        for (std::size_t i = 0; i < bs.size(); ++i) byte_map_[bs[i]] = utf8(cs[i]);
    }

    static std::string utf8(int cp) {
        std::string s;
        if (cp < 0x80) {
            s.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
        return s;
    }

    std::vector<std::string> bpe(const std::string& word) const {
        std::vector<std::string> sym;
        for (unsigned char c : word) sym.push_back(byte_map_[c]);
        if (sym.empty()) return sym;
        sym.back() += "</w>";
        while (sym.size() > 1) {
            int best = INT_MAX;
            std::size_t at = 0;
            for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
                auto it = ranks_.find(sym[i] + ' ' + sym[i + 1]);
                if (it != ranks_.end() && it->second < best) {
                    best = it->second;
                    at = i;
                }
            }
            if (best == INT_MAX) break;
            // Merge every occurrence of the winning pair, left to right.
            const std::string left = sym[at], right = sym[at + 1];
            std::vector<std::string> next;
            for (std::size_t i = 0; i < sym.size();) {
                if (i + 1 < sym.size() && sym[i] == left && sym[i + 1] == right) {
                    next.push_back(left + right);
                    i += 2;
                } else {
                    next.push_back(sym[i++]);
                }
            }
            sym = std::move(next);
        }
        return sym;
    }

    bool count_special_;
    std::string byte_map_[256];
    std::unordered_map<std::string, int> ranks_;
};

inline std::shared_ptr<const Tokenizer> default_tokenizer() {
    static const auto tok = std::make_shared<const WhitespacePunctTokenizer>();
    return tok;
}

}  // namespace finecir
