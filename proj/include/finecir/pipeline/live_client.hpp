#pragma once

// Client for an OpenAI-compatible chat-completions endpoint. Images are sent
// as URLs when their URI is http(s), otherwise inlined as base64 data URLs.
// Define CPPHTTPLIB_OPENSSL_SUPPORT (and link OpenSSL) for https endpoints.

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <httplib.h>
// <resolv.h>, pulled in above, defines _res, which clashes with Eigen parameter names.
#ifdef _res
#undef _res
#endif
#include <nlohmann/json.hpp>

#include "finecir/pipeline/clients.hpp"

namespace finecir::pipeline {

struct LiveClientConfig {
    std::string endpoint;                           // e.g. https://api.example.com
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env = "FINECIR_LLM_API_KEY";  // credential comes from the environment only
    int timeout_s = 120;
    double temperature = 0.0;
};

class LiveMllmClient final : public MllmClient {
public:
    LiveMllmClient(Role role, LiveClientConfig cfg) : role_(role), cfg_(std::move(cfg)) {
        if (cfg_.endpoint.empty()) throw ClientError("live client for " + to_string(role_) + ": endpoint is empty");
        if (cfg_.model.empty()) throw ClientError("live client for " + to_string(role_) + ": model is empty");
    }

    Role role() const override { return role_; }
    bool deterministic() const override { return false; }
    std::string name() const override { return cfg_.model; }

    static std::string image_url(const std::string& uri) {
        if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0 || uri.rfind("data:", 0) == 0) return uri;
        std::ifstream in(uri, std::ios::binary);
        if (!in) throw ClientError("cannot read image " + uri);
        std::ostringstream ss;
        ss << in.rdbuf();
        std::string mime = "image/jpeg";
        if (uri.size() > 4 && uri.compare(uri.size() - 4, 4, ".png") == 0) mime = "image/png";
        return "data:" + mime + ";base64," + httplib::detail::base64_encode(ss.str());
    }

    nlohmann::json request_body(const MllmRequest& req) const {
        nlohmann::json content = nlohmann::json::array();
        content.push_back({{"type", "text"}, {"text", req.prompt}});
        for (const auto& img : req.images)
            content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(img.uri)}}}});
        return {{"model", cfg_.model},
                {"temperature", cfg_.temperature},
                {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
    }

    MllmReply invoke(const MllmRequest& req) const override {
        httplib::Client cli(cfg_.endpoint);
        cli.set_connection_timeout(cfg_.timeout_s, 0);
        cli.set_read_timeout(cfg_.timeout_s, 0);
        httplib::Headers headers;
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
        auto res = cli.Post(cfg_.path, headers, request_body(req).dump(), "application/json");
        if (!res) throw ClientError(to_string(role_) + ": request failed: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw ClientError(to_string(role_) + ": HTTP " + std::to_string(res->status) + ": " + res->body);
        try {
            auto j = nlohmann::json::parse(res->body);
            return {j.at("choices").at(0).at("message").at("content").get<std::string>(),
                    j.value("model", cfg_.model)};
        } catch (const nlohmann::json::exception& e) {
            throw ReplyParseError(to_string(role_) + ": malformed completion: " + e.what(), res->body);
        }
    }

private:
    Role role_;
    LiveClientConfig cfg_;
};

}  // namespace finecir::pipeline
