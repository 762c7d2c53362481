#include <gtest/gtest.h>

#include "finecir/cli/app.hpp"
#include "support/pipeline_harness.hpp"

using namespace finecir;
using finecir::testing::scratch_dir;
using finecir::testing::slurp;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "finecir");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

json last_error(const Outcome& o) {
    const auto pos = o.err.rfind("{\"error\"");
    return pos == std::string::npos ? json() : json::parse(o.err.substr(pos));
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    auto o = invoke({});
    EXPECT_EQ(o.code, 2);
    EXPECT_EQ(last_error(o)["error"]["kind"], "usage");
    EXPECT_EQ(invoke({"frobnicate"}).code, 2);
    EXPECT_EQ(invoke({"sg", "parse"}).code, 2);  // --text is required
    EXPECT_EQ(invoke({"sg", "parse", "--text", "x", "--backend", "external"}).code, 2);
    EXPECT_EQ(invoke({"stats", "--manifest", "/nonexistent/m.jsonl"}).code, 2);
    EXPECT_EQ(invoke({"--version"}).code, 0);
}

TEST(Cli, SgParsePrintsTheGraph) {
    auto o = invoke({"sg", "parse", "--text", "replace the cat with a dog"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto g = json::parse(o.out);
    EXPECT_EQ(g["entities"], json({"cat", "dog"}));
    EXPECT_EQ(g["relations"][0]["predicate"], "becomes");
}

TEST(Cli, SynthFixtureAndStats) {
    const auto dir = scratch_dir("cli_fixture");
    ASSERT_EQ(invoke({"synth", "--fixture", "--out-dir", dir.string()}).code, 0);
    EXPECT_TRUE(fs::exists(dir / "provenance.json"));
    auto o = invoke({"stats", "--manifest", (dir / "manifest.jsonl").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto s = json::parse(o.out);
    EXPECT_EQ(s["test"], 20);
    EXPECT_EQ(s["train"], 0);
}

TEST(Cli, MalformedManifestIsARuntimeError) {
    const auto dir = scratch_dir("cli_bad_manifest");
    std::ofstream(dir / "m.jsonl") << "{\"schema_version\":1}\n";
    auto o = invoke({"stats", "--manifest", (dir / "m.jsonl").string()});
    EXPECT_EQ(o.code, 1);
    EXPECT_EQ(last_error(o)["error"]["kind"], "runtime");
}

TEST(Cli, UnknownConfigKeyExitsTwo) {
    const auto dir = scratch_dir("cli_config");
    ASSERT_EQ(invoke({"synth", "--fixture", "--out-dir", dir.string()}).code, 0);
    std::ofstream(dir / "cfg.json") << R"({"pipeline":{"similarity_treshold":0.5}})";
    auto o = invoke({"pipeline", "run", "--config", (dir / "cfg.json").string(), "--manifest",
                     (dir / "manifest.jsonl").string(), "--images", (dir / "images.jsonl").string(), "--out-dir",
                     (dir / "out").string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_EQ(last_error(o)["error"]["kind"], "config");
    EXPECT_NE(o.err.find("similarity_treshold"), std::string::npos);
}

TEST(Cli, PipelineRunsAreByteIdentical) {
    const auto dir = scratch_dir("cli_pipeline");
    ASSERT_EQ(invoke({"synth", "--fixture", "--out-dir", dir.string()}).code, 0);
    std::ofstream(dir / "cfg.json") << R"({"review":{"clock":"logical"}})";
    const std::vector<std::string> args{"pipeline", "run",
                                        "--config", (dir / "cfg.json").string(),
                                        "--manifest", (dir / "manifest.jsonl").string(),
                                        "--images", (dir / "images.jsonl").string(),
                                        "--out-dir", (dir / "out").string(),
                                        "--review-dir", (dir / "review").string()};
    std::vector<std::string> files{"out/manifest.jsonl", "out/ledger.jsonl", "out/provenance.json", "review/log.jsonl"};
    std::vector<std::string> first;
    for (int run = 0; run < 2; ++run) {
        fs::remove_all(dir / "out");
        fs::remove_all(dir / "review");
        auto o = invoke(args);
        ASSERT_EQ(o.code, 0) << o.err;
        const auto j = json::parse(o.out);
        EXPECT_EQ(j["finalized"].get<int>() + j["discarded"].get<int>() + j["awaiting_review"].get<int>(), 20);
        EXPECT_EQ(j["open_review_items"], j["awaiting_review"]);
        for (std::size_t i = 0; i < files.size(); ++i) {
            const auto bytes = slurp(dir / files[i]);
            EXPECT_FALSE(bytes.empty()) << files[i];
            if (run == 0) first.push_back(bytes);
            else EXPECT_EQ(bytes, first[i]) << files[i];
        }
    }
}

TEST(Cli, StageGroupsChainThroughTheOutputManifest) {
    const auto dir = scratch_dir("cli_groups");
    ASSERT_EQ(invoke({"synth", "--fixture", "--out-dir", dir.string()}).code, 0);
    std::string in = (dir / "manifest.jsonl").string();
    for (const std::string g : {"select", "construct", "check"}) {
        auto o = invoke({"pipeline", g, "--manifest", in, "--images", (dir / "images.jsonl").string(), "--out-dir",
                         (dir / g).string(), "--review-dir", (dir / "review").string()});
        ASSERT_EQ(o.code, 0) << g << o.err;
        in = (dir / g / "manifest.jsonl").string();
    }
    const auto m = load_manifest(in);
    std::size_t finalized = 0;
    for (const auto& t : m.triplets) finalized += t.status == Status::finalized;
    EXPECT_GT(finalized, 0u);
}

TEST(Cli, LiveClientsNeedAnEndpoint) {
    const auto dir = scratch_dir("cli_live");
    ASSERT_EQ(invoke({"synth", "--fixture", "--out-dir", dir.string()}).code, 0);
    auto o = invoke({"pipeline", "select", "--clients", "live", "--manifest", (dir / "manifest.jsonl").string(),
                     "--images", (dir / "images.jsonl").string(), "--out-dir", (dir / "out").string(), "--review-dir",
                     (dir / "review").string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_EQ(last_error(o)["error"]["kind"], "config");
}

TEST(Cli, TrainThenEvaluate) {
    const auto dir = scratch_dir("cli_train");
    ASSERT_EQ(invoke({"synth", "--images", "120", "--out-dir", dir.string()}).code, 0);
    const auto m = (dir / "manifest.jsonl").string(), im = (dir / "images.jsonl").string();
    auto o = invoke({"train", "--manifest", m, "--images", im, "--out", (dir / "ck.json").string(), "--steps", "10",
                     "--metrics", (dir / "metrics.jsonl").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(json::parse(o.out)["steps"], 10);
    const auto metrics_a = slurp(dir / "metrics.jsonl");
    o = invoke({"train", "--manifest", m, "--images", im, "--out", (dir / "ck2.json").string(), "--steps", "10",
                "--metrics", (dir / "metrics.jsonl").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(slurp(dir / "metrics.jsonl"), metrics_a);
    EXPECT_EQ(slurp(dir / "ck.json"), slurp(dir / "ck2.json"));

    o = invoke({"eval", "--checkpoint", (dir / "ck.json").string(), "--manifest", m, "--images", im, "--ks", "1,5",
                "--out", (dir / "report.json").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NE(o.out.find("R@5"), std::string::npos);
    const auto rep = json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(rep["system"], "finecir");
    EXPECT_TRUE(rep["metrics"]["recall"].contains("R@1"));

    o = invoke({"eval", "--baseline", "image_only", "--manifest", m, "--images", im});
    EXPECT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(invoke({"eval", "--manifest", m, "--images", im}).code, 2);  // no checkpoint, no baseline
    EXPECT_EQ(invoke({"eval", "--baseline", "image_only", "--manifest", m, "--images", im, "--ks", "0"}).code, 2);
    EXPECT_EQ(invoke({"eval", "--baseline", "magic", "--manifest", m, "--images", im}).code, 2);
}
