#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "finecir/sgparse/scene_graph.hpp"

namespace finecir::sg {

/// Adapter for an out-of-process scene-graph parser (a neural parser behind
/// a small wrapper script). The command receives the text on stdin and must
/// print the structured-text scene-graph JSON on stdout.
class ExternalParser final : public ParserBackend {
public:
    explicit ExternalParser(std::string command, std::string variant = "external")
        : command_(std::move(command)), variant_(std::move(variant)) {}

    SceneGraph parse(const std::string& text) const override {
        if (text.empty()) throw std::invalid_argument("parse_scene_graph: text must be non-empty");
        char path[] = "/tmp/finecir-sg-XXXXXX";
        const int fd = ::mkstemp(path);
        if (fd < 0) throw ParserError("external parser: cannot create temp file");
        {
            std::ofstream tmp(path, std::ios::trunc);
            tmp << text;
        }
        ::close(fd);
        const std::string cmd = command_ + " < '" + path + "'";
        std::string output;
        FILE* pipe = ::popen(cmd.c_str(), "r");
        if (!pipe) {
            std::remove(path);
            throw ParserError("external parser: cannot start '" + command_ + "'");
        }
        char buf[4096];
        std::size_t n;
        while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
        const int status = ::pclose(pipe);
        std::remove(path);
        if (status != 0)
            throw ParserError("external parser '" + command_ + "' exited with status " + std::to_string(status));
        try {
            return scene_graph_from_json(nlohmann::json::parse(output));
        } catch (const std::exception& e) {
            throw ParserError("external parser produced invalid scene graph: " + std::string(e.what()));
        }
    }

    std::string name() const override { return variant_; }
    bool reentrant() const override { return true; }
    const std::string& command() const { return command_; }

private:
    std::string command_;
    std::string variant_;
};

}  // namespace finecir::sg
