#include <gtest/gtest.h>

#include <sstream>

#include "finecir/core/hash.hpp"
#include "finecir/core/manifest.hpp"
#include "finecir/core/tokenizer.hpp"
#include "finecir/core/types.hpp"

using namespace finecir;

namespace {

Triplet sample_triplet(const std::string& id = "t1") {
    Triplet t;
    t.id = id;
    t.ref = {"img_a", "file:///data/a.png", Split::train};
    t.target = {"img_b", "file:///data/b.png", Split::train};
    t.mod_text = {"make the dog brown", 4, Grain::fine};
    t.status = Status::finalized;
    t.eval = EvalRecord{{true, true, false}, "close enough"};
    t.provenance["source"] = "unit";
    t.subset_ids = {"img_b", "img_c"};
    return t;
}

std::string record_with(const std::string& key, const nlohmann::json& value) {
    auto j = nlohmann::json::parse(triplet_record(sample_triplet()));
    if (value.is_discarded())
        j.erase(key);
    else
        j[key] = value;
    return j.dump();
}

}  // namespace

TEST(Hash, Fnv1aKnownVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Status, ForwardTransitions) {
    EXPECT_TRUE(is_forward_transition(Status::raw, Status::sampled));
    EXPECT_TRUE(is_forward_transition(Status::sampled, Status::sampled));
    EXPECT_TRUE(is_forward_transition(Status::assessed, Status::discarded));
    EXPECT_FALSE(is_forward_transition(Status::refined, Status::generated));
    EXPECT_FALSE(is_forward_transition(Status::discarded, Status::finalized));

    Triplet t;
    t.advance(Status::selected);
    EXPECT_THROW(t.advance(Status::sampled), TransitionError);
    t.discard("pair_check", "yes_count<=1");
    EXPECT_EQ(t.status, Status::discarded);
    EXPECT_EQ(t.provenance.at("discard_rule"), "yes_count<=1");
}

TEST(Status, NamesRoundTrip) {
    for (int i = 0; i <= static_cast<int>(Status::discarded); ++i) {
        auto s = static_cast<Status>(i);
        EXPECT_EQ(parse_status(to_string(s)), s);
    }
    EXPECT_FALSE(parse_status("pending").has_value());
}

TEST(Tokenizer, SplitsWordsAndPunctuation) {
    WhitespacePunctTokenizer tok;
    EXPECT_EQ(tok.tokenize("Make the dog's collar RED, please!"),
              (std::vector<std::string>{"make", "the", "dog's", "collar", "red", ",", "please", "!"}));
    EXPECT_EQ(tok.count("  "), 0);
    EXPECT_EQ(tok.count("a-b"), 3);
    EXPECT_EQ(tok.name(), "whitespace_punct");
}

TEST(Tokenizer, BpeMergesAndSpecialTokens) {
    BpeTokenizer bare({});
    EXPECT_EQ(bare.tokenize("hello"), (std::vector<std::string>{"h", "e", "l", "l", "o</w>"}));
    EXPECT_EQ(bare.count("hello"), 7);

    BpeTokenizer merged({{"h", "e"}, {"l", "l"}, {"he", "ll"}, {"hell", "o</w>"}}, false);
    EXPECT_EQ(merged.tokenize("Hello hello"), (std::vector<std::string>{"hello</w>", "hello</w>"}));
    EXPECT_EQ(merged.count("hello"), 1);
}

TEST(Manifest, RecordRoundTrip) {
    const auto t = sample_triplet();
    const auto back = parse_triplet_record(triplet_record(t), 1, WhitespacePunctTokenizer{});
    EXPECT_EQ(back, t);
}

TEST(Manifest, StreamRoundTripIsByteStable) {
    DatasetManifest m;
    m.name = "unit";
    m.triplets = {sample_triplet("t1"), sample_triplet("t2")};
    m.triplets[1].ref.split = m.triplets[1].target.split = Split::test;
    m.triplets[1].eval.reset();
    m.triplets[1].subset_ids.clear();
    m.recount();

    std::ostringstream a;
    write_manifest(a, m);
    std::istringstream in(a.str() + "\n   \n");
    auto back = parse_manifest(in, "unit", *default_tokenizer());
    EXPECT_EQ(back, m);
    EXPECT_EQ(back.counts.train, 1u);
    EXPECT_EQ(back.counts.test, 1u);
    std::ostringstream b;
    write_manifest(b, back);
    EXPECT_EQ(a.str(), b.str());
}

TEST(Manifest, SchemaErrorsNameTheField) {
    const WhitespacePunctTokenizer tok;
    auto field_of = [&](const std::string& rec) -> std::string {
        try {
            parse_triplet_record(rec, 3, tok);
        } catch (const SchemaError& e) {
            EXPECT_EQ(e.line(), 3u);
            return e.field();
        }
        return "";
    };
    EXPECT_EQ(field_of(record_with("split", "val")), "split");
    EXPECT_EQ(field_of(record_with("grain", "medium")), "grain");
    EXPECT_EQ(field_of(record_with("status", "pending")), "status");
    EXPECT_EQ(field_of(record_with("extra", 1)), "extra");
    EXPECT_EQ(field_of(record_with("schema_version", 2)), "schema_version");
    EXPECT_EQ(field_of(record_with("token_count", 99)), "token_count");
    EXPECT_EQ(field_of(record_with("eval_answers", nlohmann::json::array({true, false}))), "eval_answers");
    EXPECT_EQ(field_of(record_with("target_id", "img_a")), "target_id");
    EXPECT_EQ(field_of(record_with("triplet_id", nlohmann::json(nlohmann::json::value_t::discarded))), "triplet_id");
    EXPECT_EQ(field_of("not json"), "<record>");
}

TEST(Manifest, DuplicateIdsAndConflictingUrisRejected) {
    const auto rec = triplet_record(sample_triplet());
    std::istringstream dup(rec + "\n" + rec + "\n");
    EXPECT_THROW(parse_manifest(dup, "x", *default_tokenizer()), SchemaError);

    auto other = sample_triplet("t2");
    other.target.uri = "file:///elsewhere.png";
    std::istringstream uri(rec + "\n" + triplet_record(other) + "\n");
    EXPECT_THROW(parse_manifest(uri, "x", *default_tokenizer()), SchemaError);
}

TEST(Manifest, StatsByHand) {
    DatasetManifest m;
    auto a = sample_triplet("a");
    a.mod_text.text = "one two three";
    auto b = sample_triplet("b");
    b.mod_text.text = "one, two";
    b.ref.split = Split::test;
    m.triplets = {a, b};
    m.recount();
    const auto s = manifest_stats(m, WhitespacePunctTokenizer{});
    EXPECT_EQ(s.train, 1u);
    EXPECT_EQ(s.test, 1u);
    EXPECT_EQ(s.max_tokens, 3);
    EXPECT_DOUBLE_EQ(s.mean_tokens, 3.0);
}

TEST(Manifest, ValidateFinalized) {
    DatasetManifest m;
    auto ok = sample_triplet("ok");
    auto coarse = sample_triplet("coarse");
    coarse.mod_text.grain = Grain::coarse;
    auto long_text = sample_triplet("long");
    long_text.mod_text.token_count = 78;
    auto gone = sample_triplet("gone");
    gone.status = Status::discarded;
    gone.mod_text.token_count = 500;
    auto mid = sample_triplet("mid");
    mid.status = Status::refined;
    m.triplets = {ok, coarse, long_text, gone, mid};
    const auto v = validate_finalized(m);
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(v[0].triplet_id, "coarse");
    EXPECT_EQ(v[0].rule, "grain");
    EXPECT_EQ(v[1].rule, "token_limit");
    EXPECT_EQ(v[2].rule, "stage");
    long_text.mod_text.token_count = 77;
    m.triplets = {long_text};
    EXPECT_TRUE(validate_finalized(m).empty());
}
