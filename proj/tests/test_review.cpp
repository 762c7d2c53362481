#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "finecir/review/server.hpp"
#include "support/pipeline_harness.hpp"

using namespace finecir;
using namespace finecir::review;
using finecir::testing::logical_store_options;
using finecir::testing::scratch_dir;
using finecir::testing::slurp;
using json = nlohmann::json;

namespace {

Decision verdict(const std::string& id, Verdict v, std::optional<std::string> text = std::nullopt) {
    Decision d;
    d.item_id = id;
    d.verdict = v;
    d.edited_text = std::move(text);
    d.reviewer = "r1";
    return d;
}

std::string long_text(int words) {
    std::string s;
    for (int i = 0; i < words; ++i) s += (i ? " " : "") + std::string("word");
    return s + ".";
}

}  // namespace

TEST(Store, EnqueueFindAndNextInOrder) {
    ReviewStore s("", logical_store_options());
    EXPECT_EQ(s.enqueue("pair_check", "t2", {{"n", 2}}), "pair_check:t2");
    s.enqueue("pair_check", "t1", {});
    s.enqueue("compress", "t1", {});
    EXPECT_EQ(s.next("pair_check")->triplet_id, "t2");
    EXPECT_EQ(s.find("compress", "t1")->created_at, 3);
    EXPECT_FALSE(s.next("refine"));
    EXPECT_THROW(s.enqueue("pair_check", "t1", {}), DuplicateItem);
    EXPECT_THROW(s.enqueue("polish", "t1", {}), StoreError);
    EXPECT_THROW(s.next("polish"), StoreError);
    EXPECT_THROW(s.enqueue("refine", "", {}), StoreError);

    s.decide(verdict("pair_check:t2", Verdict::retain));
    EXPECT_EQ(s.next("pair_check")->triplet_id, "t1");
    const auto counts = s.open_counts();
    EXPECT_EQ(counts.size(), stage_verdicts().size());
    EXPECT_EQ(counts.at("pair_check"), 1u);
    EXPECT_EQ(counts.at("compress"), 1u);
    EXPECT_EQ(counts.at("refine"), 0u);
}

TEST(Store, DecisionsAreValidatedPerStage) {
    ReviewStore s("", logical_store_options());
    for (const char* st : {"pair_check", "refine", "assess_text", "assess_image", "compress"}) s.enqueue(st, "t", {});
    EXPECT_THROW(s.decide(verdict("pair_check:t", Verdict::edit, "x")), InvalidDecision);
    EXPECT_THROW(s.decide(verdict("refine:t", Verdict::retain)), InvalidDecision);
    EXPECT_THROW(s.decide(verdict("refine:t", Verdict::edit)), InvalidDecision);
    EXPECT_THROW(s.decide(verdict("refine:t", Verdict::edit, "   ")), InvalidDecision);
    EXPECT_THROW(s.decide(verdict("assess_text:t", Verdict::retain, "x")), InvalidDecision);
    EXPECT_THROW(s.decide(verdict("compress:t", Verdict::edit, long_text(77))), InvalidDecision);  // 78 tokens
    EXPECT_THROW(s.decide(verdict("missing:t", Verdict::retain)), ItemNotFound);

    EXPECT_NO_THROW(s.decide(verdict("compress:t", Verdict::edit, long_text(76))));  // exactly 77
    EXPECT_NO_THROW(s.decide(verdict("refine:t", Verdict::edit, long_text(100))));
    EXPECT_NO_THROW(s.decide(verdict("assess_image:t", Verdict::retain)));
    EXPECT_THROW(s.decide(verdict("assess_image:t", Verdict::discard)), AlreadyDecided);
    EXPECT_EQ(s.get("assess_image:t")->decision->verdict, Verdict::retain);
}

TEST(Store, ReopenRestoresEveryItem) {
    const auto dir = scratch_dir("rv_reopen").string();
    {
        ReviewStore s(dir, logical_store_options());
        s.enqueue("pair_check", "a", {{"text", "make it red"}});
        s.enqueue("refine", "b", {});
        s.decide(verdict("refine:b", Verdict::edit, "Make it blue."));
    }
    ReviewStore back(dir, logical_store_options());
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.get("pair_check:a")->payload["text"], "make it red");
    EXPECT_EQ(back.get("pair_check:a")->state, ItemState::open);
    EXPECT_EQ(*back.get("refine:b")->decision->edited_text, "Make it blue.");
    back.enqueue("compress", "c", {});
    EXPECT_EQ(back.get("compress:c")->sequence, 3u);
}

TEST(Store, TornFinalRecordIsDropped) {
    const auto dir = scratch_dir("rv_torn").string();
    {
        ReviewStore s(dir, logical_store_options());
        s.enqueue("pair_check", "a", {});
    }
    {
        std::ofstream out(dir + "/log.jsonl", std::ios::app);
        out << R"({"op":"decide","decision":{"item_id":"pair_ch)";
    }
    ReviewStore back(dir, logical_store_options());
    EXPECT_EQ(back.get("pair_check:a")->state, ItemState::open);
}

TEST(Store, CorruptMiddleRecordIsAnError) {
    const auto dir = scratch_dir("rv_corrupt").string();
    {
        ReviewStore s(dir, logical_store_options());
        s.enqueue("pair_check", "a", {});
    }
    const auto good = slurp(dir + "/log.jsonl");
    std::ofstream(dir + "/log.jsonl", std::ios::trunc) << "{oops\n" << good;
    EXPECT_THROW(ReviewStore(dir, logical_store_options()), StoreError);
}

TEST(Store, CompactionKeepsStateAndTruncatesTheLog) {
    const auto dir = scratch_dir("rv_compact").string();
    std::vector<json> before;
    {
        ReviewStore s(dir, logical_store_options());
        for (int i = 0; i < 5; ++i) s.enqueue("assess_text", "t" + std::to_string(i), {{"i", i}});
        s.decide(verdict("assess_text:t1", Verdict::discard));
        s.compact();
        EXPECT_TRUE(slurp(s.log_path()).empty());
        s.decide(verdict("assess_text:t3", Verdict::retain));
        for (const auto& it : s.items()) before.push_back(it.to_json());
    }
    ReviewStore back(dir, logical_store_options());
    std::vector<json> after;
    for (const auto& it : back.items()) after.push_back(it.to_json());
    EXPECT_EQ(before, after);
    EXPECT_EQ(back.next("assess_text")->triplet_id, "t0");
}

TEST(Store, ConcurrentDecisionsOnOneItemLandExactlyOnce) {
    const auto dir = scratch_dir("rv_race").string();
    ReviewStore s(dir, logical_store_options());
    for (int i = 0; i < 20; ++i) s.enqueue("assess_image", "t" + std::to_string(i), {});
    std::atomic<int> ok{0}, conflicts{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < 8; ++w) {
        threads.emplace_back([&, w] {
            for (int i = 0; i < 20; ++i) {
                try {
                    auto d = verdict("assess_image:t" + std::to_string(i), w % 2 ? Verdict::retain : Verdict::discard);
                    d.reviewer = "w" + std::to_string(w);
                    s.decide(d);
                    ++ok;
                } catch (const AlreadyDecided&) {
                    ++conflicts;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(ok, 20);
    EXPECT_EQ(conflicts, 8 * 20 - 20);

    // The log holds exactly one decision per item and replays to the same winners.
    std::ifstream in(s.log_path());
    int decides = 0;
    for (std::string line; std::getline(in, line);) decides += json::parse(line)["op"] == "decide";
    EXPECT_EQ(decides, 20);
    ReviewStore back(dir, logical_store_options());
    for (int i = 0; i < 20; ++i) {
        const auto id = "assess_image:t" + std::to_string(i);
        EXPECT_EQ(back.get(id)->decision->reviewer, s.get(id)->decision->reviewer);
    }
}

// ---------------------------------------------------------------- HTTP

namespace {

class Served {
public:
    explicit Served(ReviewStore& store, ServerOptions opt = {}) : server_(store, std::move(opt)) {
        port_ = server_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { server_.serve(); });
        server_.wait_until_ready();
    }
    ~Served() {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_connection_timeout(5);
        return c;
    }

private:
    ReviewServer server_;
    int port_ = 0;
    std::thread thread_;
};

httplib::Result post_json(httplib::Client& c, const std::string& path, const std::string& body,
                          httplib::Headers h = {}) {
    return c.Post(path, h, body, "application/json");
}

}  // namespace

TEST(Http, QueuesAndNext) {
    ReviewStore store("", logical_store_options());
    store.enqueue("pair_check", "t9", {{"text", "x"}});
    store.enqueue("pair_check", "t1", {});
    Served srv(store);
    auto c = srv.client();

    auto r = c.Get("/queues");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    const auto q = json::parse(r->body);
    EXPECT_EQ(q["queues"]["pair_check"], 2);
    EXPECT_EQ(q["queues"]["compress"], 0);
    EXPECT_EQ(q["token_limit"], 77);
    EXPECT_EQ(q["tokenizer"], store.tokenizer().name());

    r = c.Get("/queues/pair_check/next");
    EXPECT_EQ(r->status, 200);
    const auto item = json::parse(r->body);
    EXPECT_EQ(item["id"], "pair_check:t9");
    EXPECT_EQ(item["state"], "open");
    EXPECT_EQ(item["allowed_verdicts"], json({"retain", "discard"}));
    EXPECT_TRUE(item["decision"].is_null());

    EXPECT_EQ(c.Get("/queues/refine/next")->status, 204);
    EXPECT_EQ(c.Get("/queues/polish/next")->status, 404);
    EXPECT_EQ(c.Get("/items/pair_check:t1")->status, 200);
    r = c.Get("/items/pair_check:nope");
    EXPECT_EQ(r->status, 404);
    EXPECT_EQ(json::parse(r->body)["error"]["code"], "not_found");
}

TEST(Http, DecisionStatusCodes) {
    ReviewStore store("", logical_store_options());
    store.enqueue("pair_check", "a", {});
    store.enqueue("compress", "b", {});
    Served srv(store);
    auto c = srv.client();

    EXPECT_EQ(post_json(c, "/items/pair_check:a/decision", "{not json")->status, 400);
    EXPECT_EQ(post_json(c, "/items/pair_check:a/decision", R"({"verdict":1})")->status, 400);
    EXPECT_EQ(post_json(c, "/items/pair_check:a/decision", R"({"verdict":"retain","x":1})")->status, 400);
    EXPECT_EQ(post_json(c, "/items/pair_check:a/decision", R"({"verdict":"maybe"})")->status, 422);
    EXPECT_EQ(post_json(c, "/items/pair_check:a/decision", R"({"verdict":"edit","edited_text":"x"})")->status, 422);
    EXPECT_EQ(post_json(c, "/items/pair_check:zz/decision", R"({"verdict":"retain"})")->status, 404);
    const json over{{"verdict", "edit"}, {"edited_text", long_text(80)}};
    auto r = post_json(c, "/items/compress:b/decision", over.dump());
    EXPECT_EQ(r->status, 422);
    EXPECT_EQ(json::parse(r->body)["error"]["code"], "invalid_decision");

    r = post_json(c, "/items/pair_check:a/decision", R"({"verdict":"retain","reviewer":"body"})",
                  {{"X-Reviewer-Id", "header"}});
    ASSERT_EQ(r->status, 200);
    const auto item = json::parse(r->body);
    EXPECT_EQ(item["state"], "decided");
    EXPECT_EQ(item["decision"]["reviewer"], "header");
    EXPECT_EQ(item["decision"]["verdict"], "retain");
    EXPECT_EQ(post_json(c, "/items/pair_check:a/decision", R"({"verdict":"discard"})")->status, 409);

    r = post_json(c, "/items/compress:b/decision", R"({"verdict":"edit","edited_text":"Short.","reviewer":"body"})");
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body)["decision"]["reviewer"], "body");
    EXPECT_EQ(*store.get("compress:b")->decision->edited_text, "Short.");
}

TEST(Http, ConcurrentPostsDecideOnce) {
    ReviewStore store("", logical_store_options());
    store.enqueue("assess_text", "a", {});
    Served srv(store);
    std::atomic<int> ok{0}, conflict{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) {
        threads.emplace_back([&, i] {
            auto c = srv.client();
            auto r = post_json(c, "/items/assess_text:a/decision", R"({"verdict":"retain"})",
                               {{"X-Reviewer-Id", "r" + std::to_string(i)}});
            if (r && r->status == 200) ++ok;
            if (r && r->status == 409) ++conflict;
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(ok, 1);
    EXPECT_EQ(conflict, 5);
}

TEST(Http, TokenizeReportsCountAndLimit) {
    ReviewStore store("", logical_store_options());
    Served srv(store);
    auto c = srv.client();
    auto r = post_json(c, "/tokenize", R"({"text":"Make it red."})");
    ASSERT_EQ(r->status, 200);
    const auto j = json::parse(r->body);
    EXPECT_EQ(j["count"], store.tokenizer().count("Make it red."));
    EXPECT_EQ(j["tokens"].size(), store.tokenizer().tokenize("Make it red.").size());
    EXPECT_EQ(j["limit"], 77);
    EXPECT_EQ(j["within_limit"], true);
    EXPECT_EQ(j["tokenizer"], store.tokenizer().name());

    const json big{{"text", long_text(77)}};
    EXPECT_EQ(json::parse(post_json(c, "/tokenize", big.dump())->body)["within_limit"], false);
    EXPECT_EQ(post_json(c, "/tokenize", R"({"txt":"a"})")->status, 400);
    EXPECT_EQ(post_json(c, "/tokenize", "[")->status, 400);
}

TEST(Http, AssetsServeFilesAndRedirect) {
    const auto dir = scratch_dir("rv_assets");
    std::ofstream(dir / "a.png", std::ios::binary) << "PNGDATA";
    ReviewStore store("", logical_store_options());
    ServerOptions opt;
    opt.assets = map_resolver({{"a", "file://" + (dir / "a.png").string()},
                               {"b", "https://example.org/b.jpg"},
                               {"c", (dir / "missing.png").string()}});
    Served srv(store, opt);
    auto c = srv.client();
    auto r = c.Get("/assets/a");
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(r->body, "PNGDATA");
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
    r = c.Get("/assets/b");
    EXPECT_EQ(r->status, 302);
    EXPECT_EQ(r->get_header_value("Location"), "https://example.org/b.jpg");
    EXPECT_EQ(c.Get("/assets/c")->status, 404);
    EXPECT_EQ(c.Get("/assets/zzz")->status, 404);
}

TEST(Http, AuthHookAndCors) {
    ReviewStore store("", logical_store_options());
    ServerOptions opt;
    opt.authorize = bearer_auth("s3cret");
    opt.cors_origin = "http://localhost:5173";
    Served srv(store, opt);
    auto c = srv.client();

    auto r = c.Get("/queues");
    EXPECT_EQ(r->status, 401);
    EXPECT_EQ(json::parse(r->body)["error"]["code"], "unauthorized");
    EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
    EXPECT_EQ(c.Get("/queues", {{"Authorization", "Bearer s3cret"}})->status, 200);
    EXPECT_EQ(c.Get("/queues", {{"Authorization", "Bearer nope"}})->status, 401);

    r = c.Options("/items/x/decision");
    EXPECT_EQ(r->status, 204);  // preflight carries no credentials
    EXPECT_NE(r->get_header_value("Access-Control-Allow-Headers").find("X-Reviewer-Id"), std::string::npos);
}

TEST(Http, DecisionsFeedTheNextPipelineRun) {
    const auto dir = scratch_dir("rv_pipeline");
    finecir::testing::FixtureRun fr(dir);
    auto first = fr.run();
    ASSERT_GT(fr.store.open_counts().at("pair_check"), 0u);
    {
        Served srv(fr.store);
        auto c = srv.client();
        for (;;) {
            auto r = c.Get("/queues/pair_check/next");
            if (r->status == 204) break;
            const auto id = json::parse(r->body)["id"].get<std::string>();
            ASSERT_EQ(post_json(c, "/items/" + id + "/decision", R"({"verdict":"discard"})")->status, 200);
        }
    }
    const auto second = fr.run(first.manifest);
    EXPECT_EQ(second.ledger.stage("pair_check").discarded, fr.fx.counts.review);
    EXPECT_EQ(fr.store.open_counts().at("pair_check"), 0u);
}
