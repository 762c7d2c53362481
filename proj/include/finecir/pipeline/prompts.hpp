#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "finecir/pipeline/prompts_v1.hpp"

namespace finecir::pipeline {

class PromptError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Templates use <name> placeholders, lowercase letters, digits and '_'.
struct PromptTemplate {
    std::string id;
    int version = 1;
    std::string text;

    std::string key() const { return id + "@v" + std::to_string(version); }

    std::vector<std::string> placeholders() const {
        static const std::regex re("<([a-z0-9_]+)>");
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (std::sregex_iterator it(text.begin(), text.end(), re), end; it != end; ++it)
            if (seen.insert((*it)[1]).second) out.push_back((*it)[1]);
        return out;
    }
};

class PromptRegistry {
public:
    /// Templates compiled into the library.
    static PromptRegistry builtin() {
        PromptRegistry r;
        for (const auto& f : builtin::kPromptsV1) r.add({std::string(f.id), 1, std::string(f.text)});
        return r;
    }

    /// Reads `dir/v<N>/<id>.txt` for every version directory present.
    static PromptRegistry load_dir(const std::string& dir) {
        namespace fs = std::filesystem;
        PromptRegistry r;
        if (!fs::is_directory(dir)) throw PromptError("prompt directory " + dir + " not found");
        std::vector<fs::path> files;
        for (const auto& vdir : fs::directory_iterator(dir)) {
            const auto name = vdir.path().filename().string();
            if (!vdir.is_directory() || name.size() < 2 || name[0] != 'v') continue;
            const int version = std::stoi(name.substr(1));
            for (const auto& f : fs::directory_iterator(vdir.path())) {
                if (f.path().extension() != ".txt") continue;
                std::ifstream in(f.path(), std::ios::binary);
                std::ostringstream ss;
                ss << in.rdbuf();
                r.add({f.path().stem().string(), version, ss.str()});
            }
        }
        return r;
    }

    void add(PromptTemplate t) {
        const auto k = t.key();
        if (!templates_.emplace(k, std::move(t)).second) throw PromptError("duplicate prompt template " + k);
    }

    bool contains(const std::string& key) const { return templates_.count(key) > 0; }

    const PromptTemplate& get(const std::string& key) const {
        auto it = templates_.find(key);
        if (it == templates_.end()) throw PromptError("unknown prompt template " + key);
        return it->second;
    }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [k, _] : templates_) out.push_back(k);
        return out;
    }

    /// Substitutes every placeholder; a placeholder without a value is an error.
    std::string render(const std::string& key, const std::map<std::string, std::string>& values) const {
        const auto& t = get(key);
        static const std::regex re("<([a-z0-9_]+)>");
        std::string out;
        std::size_t last = 0;
        for (std::sregex_iterator it(t.text.begin(), t.text.end(), re), end; it != end; ++it) {
            const auto& m = *it;
            auto v = values.find(m[1]);
            if (v == values.end()) throw PromptError("template " + key + ": missing value for <" + m[1].str() + ">");
            out.append(t.text, last, static_cast<std::size_t>(m.position(0)) - last);
            out += v->second;
            last = static_cast<std::size_t>(m.position(0) + m.length(0));
        }
        out.append(t.text, last, std::string::npos);
        return out;
    }

private:
    std::map<std::string, PromptTemplate> templates_;
};

}  // namespace finecir::pipeline
