#pragma once

// HTTP front of the review store.
//
//   GET  /queues                 {"queues":{stage:open_count,...},"token_limit":77,"tokenizer":...}
//   GET  /queues/{stage}/next    ReviewItem, or 204 when the queue is empty
//   GET  /items/{id}             ReviewItem
//   POST /items/{id}/decision    body {"verdict","edited_text"?,"reviewer"?}; X-Reviewer-Id wins
//   GET  /assets/{image_id}      file contents, or 302 to an http(s) uri
//   POST /tokenize               body {"text"} -> {"count","limit","within_limit","tokenizer","tokens"}
//
// Errors are {"error":{"code","message"}} with 400 (malformed), 401 (auth
// hook refused), 404 (unknown), 409 (already decided) or 422 (invalid
// decision).

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include <httplib.h>
// <resolv.h>, pulled in above, defines _res, which clashes with Eigen parameter names.
#ifdef _res
#undef _res
#endif
#include <nlohmann/json.hpp>

#include "finecir/review/store.hpp"

namespace finecir::review {

/// Maps an image id to its uri; nullopt when unknown.
using AssetResolver = std::function<std::optional<std::string>(const std::string&)>;

inline AssetResolver map_resolver(std::map<std::string, std::string> uris) {
    return [uris = std::move(uris)](const std::string& id) -> std::optional<std::string> {
        auto it = uris.find(id);
        if (it == uris.end()) return std::nullopt;
        return it->second;
    };
}

struct ServerOptions {
    AssetResolver assets;
    /// Returns false to reject a request with 401. Unset means open access.
    std::function<bool(const httplib::Request&)> authorize;
    /// Directory served at "/" (e.g. a built frontend). Empty disables.
    std::string static_dir;
    /// Value for Access-Control-Allow-Origin; empty sends none.
    std::string cors_origin;
};

/// Bearer-token check for ServerOptions::authorize.
inline std::function<bool(const httplib::Request&)> bearer_auth(std::string token) {
    return [token = std::move(token)](const httplib::Request& req) {
        return req.get_header_value("Authorization") == "Bearer " + token;
    };
}

inline std::string mime_for(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    return "application/octet-stream";
}

class ReviewServer {
public:
    ReviewServer(ReviewStore& store, ServerOptions opt = {}) : store_(store), opt_(std::move(opt)) { routes(); }

    httplib::Server& http() { return http_; }

    /// Binds to `port` (0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port) {
        if (port == 0) return http_.bind_to_any_port(host);
        if (!http_.bind_to_port(host, port)) throw StoreError("cannot bind " + host + ":" + std::to_string(port));
        return port;
    }

    /// Blocks until stop() is called.
    bool serve() { return http_.listen_after_bind(); }
    void stop() { http_.stop(); }
    void wait_until_ready() const { http_.wait_until_ready(); }

private:
    static void send_error(httplib::Response& res, int status, const std::string& code, const std::string& msg) {
        res.status = status;
        res.set_content(nlohmann::json{{"error", {{"code", code}, {"message", msg}}}}.dump(), "application/json");
    }

    static void send_json(httplib::Response& res, const nlohmann::ordered_json& j, int status = 200) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    void routes() {
        if (!opt_.static_dir.empty() && !http_.set_mount_point("/", opt_.static_dir))
            throw StoreError("static directory " + opt_.static_dir + " does not exist");

        http_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (!opt_.cors_origin.empty()) {
                res.set_header("Access-Control-Allow-Origin", opt_.cors_origin);
                res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization, X-Reviewer-Id");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            }
            if (req.method == "OPTIONS") {
                res.status = 204;
                return httplib::Server::HandlerResponse::Handled;
            }
            if (opt_.authorize && !opt_.authorize(req)) {
                send_error(res, 401, "unauthorized", "request rejected by the auth hook");
                return httplib::Server::HandlerResponse::Handled;
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });

        http_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                send_error(res, 500, "internal", e.what());
            } catch (...) {
                send_error(res, 500, "internal", "unknown error");
            }
        });

        http_.Get("/queues", [this](const httplib::Request&, httplib::Response& res) {
            nlohmann::ordered_json q = nlohmann::ordered_json::object();
            for (const auto& [stage, n] : store_.open_counts()) q[stage] = n;
            send_json(res, {{"queues", q},
                            {"token_limit", store_.token_limit()},
                            {"tokenizer", store_.tokenizer().name()}});
        });

        http_.Get(R"(/queues/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string stage = req.matches[1];
            if (!is_stage(stage)) return send_error(res, 404, "unknown_stage", "no review stage '" + stage + "'");
            auto item = store_.next(stage);
            if (!item) {
                res.status = 204;
                return;
            }
            send_json(res, item->to_json());
        });

        http_.Get(R"(/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto item = store_.get(req.matches[1]);
            if (!item) return send_error(res, 404, "not_found", "no review item " + std::string(req.matches[1]));
            send_json(res, item->to_json());
        });

        http_.Post(R"(/items/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::exception& e) {
                return send_error(res, 400, "bad_json", e.what());
            }
            if (!body.is_object() || !body.contains("verdict") || !body["verdict"].is_string())
                return send_error(res, 400, "bad_request", "body must be an object with a string 'verdict'");
            for (const auto& [k, _] : body.items())
                if (k != "verdict" && k != "edited_text" && k != "reviewer")
                    return send_error(res, 400, "bad_request", "unknown field '" + k + "'");
            Decision d;
            d.item_id = req.matches[1];
            auto v = parse_verdict(body["verdict"].get<std::string>());
            if (!v) return send_error(res, 422, "invalid_decision", "unknown verdict " + body["verdict"].dump());
            d.verdict = *v;
            if (body.contains("edited_text") && !body["edited_text"].is_null()) {
                if (!body["edited_text"].is_string())
                    return send_error(res, 400, "bad_request", "edited_text must be a string");
                d.edited_text = body["edited_text"].get<std::string>();
            }
            d.reviewer = req.get_header_value("X-Reviewer-Id");
            if (d.reviewer.empty() && body.contains("reviewer") && body["reviewer"].is_string())
                d.reviewer = body["reviewer"].get<std::string>();
            try {
                send_json(res, store_.decide(std::move(d)).to_json());
            } catch (const ItemNotFound& e) {
                send_error(res, 404, "not_found", e.what());
            } catch (const AlreadyDecided& e) {
                send_error(res, 409, "already_decided", e.what());
            } catch (const InvalidDecision& e) {
                send_error(res, 422, "invalid_decision", e.what());
            }
        });

        http_.Get(R"(/assets/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto uri = opt_.assets ? opt_.assets(id) : std::nullopt;
            if (!uri) return send_error(res, 404, "not_found", "no asset " + id);
            if (uri->rfind("http://", 0) == 0 || uri->rfind("https://", 0) == 0) return res.set_redirect(*uri, 302);
            std::string path = uri->rfind("file://", 0) == 0 ? uri->substr(7) : *uri;
            std::ifstream in(path, std::ios::binary);
            if (!in) return send_error(res, 404, "not_found", "asset " + id + " is not readable at " + *uri);
            std::ostringstream ss;
            ss << in.rdbuf();
            res.set_content(ss.str(), mime_for(path));
        });

        http_.Post("/tokenize", [this](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::exception& e) {
                return send_error(res, 400, "bad_json", e.what());
            }
            if (!body.is_object() || !body.contains("text") || !body["text"].is_string())
                return send_error(res, 400, "bad_request", "body must be an object with a string 'text'");
            const auto tokens = store_.tokenizer().tokenize(body["text"].get<std::string>());
            const int n = store_.tokenizer().count(body["text"].get<std::string>());
            send_json(res, {{"count", n},
                            {"limit", store_.token_limit()},
                            {"within_limit", n <= store_.token_limit()},
                            {"tokenizer", store_.tokenizer().name()},
                            {"tokens", tokens}});
        });
    }

    ReviewStore& store_;
    ServerOptions opt_;
    httplib::Server http_;
};

}  // namespace finecir::review
