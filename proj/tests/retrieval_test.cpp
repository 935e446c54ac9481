#include <doctest.h>

#include <cmath>

#include "retrieval_cases.hpp"
#include "score/error.hpp"
#include "score/pipeline.hpp"
#include "score/retrieval.hpp"
#include "support.hpp"

using namespace score;
using nlohmann::json;
using score::testing::mock_config;

namespace {

/// Unit vector at `cos_to_x` cosine from (1, 0).
Embedding at_cosine(double cos_to_x) { return {cos_to_x, std::sqrt(1.0 - cos_to_x * cos_to_x)}; }

struct Small {
    FlatIndex index{2};
    DocumentStore docs;
    void add(const std::string& id, EpisodeIndex t, Embedding v, double sentiment, std::string text = "") {
        index.add({id, EntryKind::summary, "s", t, std::move(v)});
        docs.put(id, {text.empty() ? "doc " + id : text, SentimentScore::checked(sentiment)});
    }
};

std::vector<std::string> ids(const ContextBundle& b) {
    std::vector<std::string> out;
    for (const auto& e : b.selected) out.push_back(e.entry_id);
    return out;
}

}  // namespace

TEST_CASE("a similar candidate with a large sentiment gap is excluded") {
    Small s;
    s.add("close_but_angry", 0, at_cosine(0.9), 0.9);
    s.add("next", 1, at_cosine(0.7), 0.2);
    s.add("far", 2, at_cosine(0.1), 0.1);
    s.index.freeze();
    RetrievalConfig cfg;
    cfg.top_n = 1;
    cfg.sentiment_tolerance = 0.3;
    const auto b = select_context("f", {1.0, 0.0}, SentimentScore::checked(0.1), s.index, s.docs, cfg, {});
    CHECK(ids(b) == std::vector<std::string>{"next"});
    CHECK(b.sentiment_filter_applied);
    CHECK_FALSE(b.sentiment_filter_bypassed);

    // Without the filter the closest wins again.
    cfg.sentiment_filter = false;
    const auto off = select_context("f", {1.0, 0.0}, SentimentScore::checked(0.1), s.index, s.docs, cfg, {});
    CHECK(ids(off) == std::vector<std::string>{"close_but_angry"});
    CHECK_FALSE(off.sentiment_filter_applied);
}

TEST_CASE("when nothing passes the filter selection falls back to similarity and says so") {
    Small s;
    s.add("a", 0, at_cosine(0.9), 1.0);
    s.add("b", 1, at_cosine(0.5), 0.9);
    s.index.freeze();
    RetrievalConfig cfg;
    cfg.top_n = 5;
    const auto b = select_context("f", {1.0, 0.0}, SentimentScore::checked(0.0), s.index, s.docs, cfg, {});
    CHECK(ids(b) == std::vector<std::string>{"a", "b"});
    CHECK(b.sentiment_filter_bypassed);
}

TEST_CASE("tail entries are dropped whole to fit the budget") {
    Small s;
    s.add("a", 0, at_cosine(0.9), 0.5, std::string(60, 'a'));
    s.add("b", 1, at_cosine(0.8), 0.5, std::string(60, 'b'));
    s.add("c", 2, at_cosine(0.7), 0.5, std::string(10, 'c'));
    s.index.freeze();
    RetrievalConfig cfg;
    cfg.context_char_budget = 100;
    const auto b = select_context("f", {1.0, 0.0}, std::nullopt, s.index, s.docs, cfg, {});
    CHECK(ids(b) == std::vector<std::string>{"a"});
    CHECK(b.truncated);
    CHECK(b.total_chars() <= 100);
}

TEST_CASE("N beyond the corpus returns every survivor untruncated") {
    Small s;
    for (int i = 0; i < 4; ++i) s.add("d" + std::to_string(i), i, at_cosine(0.2 * i), 0.5);
    s.index.freeze();
    RetrievalConfig cfg;
    cfg.top_n = 50;
    const auto b = select_context("f", {1.0, 0.0}, SentimentScore::checked(0.5), s.index, s.docs, cfg, {});
    CHECK(b.selected.size() == 4);
    CHECK_FALSE(b.truncated);
}

TEST_CASE("scope restricts story and episodes") {
    Small s;
    for (int i = 0; i < 6; ++i) s.add("d" + std::to_string(i), i, at_cosine(0.15 * i), 0.5);
    s.index.freeze();
    RetrievalConfig cfg;
    const auto b = select_context("f", {1.0, 0.0}, std::nullopt, s.index, s.docs, cfg, {"s", 2, 5});
    CHECK(ids(b) == std::vector<std::string>{"d4", "d3", "d1", "d0"});
    const auto none = select_context("f", {1.0, 0.0}, std::nullopt, s.index, s.docs, cfg, {"other", {}, {}});
    CHECK(none.selected.empty());
}

TEST_CASE("50 synthetic documents match filter-then-top-N exhaustively") {
    std::mt19937_64 rng(50);
    for (int trial = 0; trial < 300; ++trial) {
        auto c = score::testing::random_retrieval_case(rng, 50);
        c.scope = {};
        const auto check = score::testing::check_retrieval_case(c);
        REQUIRE(check.sound);
        REQUIRE(check.matches_oracle);
    }
}

TEST_CASE("randomized retrieval calls are sound and equal the oracle") {
    std::mt19937_64 rng(1000);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto c = score::testing::random_retrieval_case(rng, 200);
        const auto check = score::testing::check_retrieval_case(c);
        REQUIRE(check.sound);
        REQUIRE(check.matches_oracle);
    }
}

TEST_CASE("retrieval through the gateway with mock embeddings") {
    LlmGateway gw(mock_config());
    const std::vector<std::string> texts = {
        "Mira carried the lantern across the frozen river.",
        "Tomas argued with the captain about the broken mast.",
        "The village celebrated the harvest with songs and bread.",
        "A storm tore the banner from the tower at dawn.",
    };
    FlatIndex index(gw.config().embed_dim);
    DocumentStore docs;
    const auto vectors = gw.embed(texts);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto id = "s#" + std::to_string(i);
        index.add({id, EntryKind::summary, "s", static_cast<EpisodeIndex>(i), vectors[i]});
        docs.put(id, {texts[i], gw.score_sentiment(texts[i])});
    }
    RetrievalConfig cfg;

    CHECK_THROWS_AS(retrieve_for_query(texts[1], index, docs, cfg, gw), ContractError);  // not frozen
    index.freeze();

    SUBCASE("identical focus text ranks first with score 1") {
        const auto b = retrieve_related(texts[2], docs.find("s#2")->sentiment, index, docs, cfg, gw);
        REQUIRE_FALSE(b.selected.empty());
        CHECK(b.selected[0].entry_id == "s#2");
        CHECK(b.selected[0].score == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("a question equal to a synopsis finds that episode") {
        const auto b = retrieve_for_query(texts[3], index, docs, cfg, gw);
        REQUIRE_FALSE(b.selected.empty());
        CHECK(b.selected[0].entry_id == "s#3");
    }
    SUBCASE("empty question is a contract error") {
        CHECK_THROWS_AS(retrieve_for_query("  ", index, docs, cfg, gw), ContractError);
    }
    SUBCASE("empty index") {
        FlatIndex empty(gw.config().embed_dim);
        empty.freeze();
        CHECK_THROWS_WITH(retrieve_for_query("where?", empty, docs, cfg, gw), doctest::Contains("index empty"));
    }
}

TEST_CASE("retrieval config validation and JSON") {
    RetrievalConfig c;
    c.top_n = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.sentiment_tolerance = 1.5;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK_THROWS_AS(retrieval_config_from_json(json{{"top_k", 3}}), ValidationError);
    const auto back = retrieval_config_from_json(retrieval_config_to_json(RetrievalConfig{}));
    CHECK(back.top_n == 5);
    CHECK(back.sentiment_tolerance == 0.3);
    CHECK(RetrievalConfig{}.pool_size() == 20);
}

TEST_CASE("sentiment ablation switches the filter off") {
    RunConfig rc;
    CHECK(effective_retrieval(rc).sentiment_filter);
    rc.ablation.disable({"sentiment"});
    CHECK_FALSE(effective_retrieval(rc).sentiment_filter);
    CHECK(rc.ablation.disabled() == std::vector<std::string>{"sentiment"});
    CHECK_THROWS_AS(rc.ablation.disable({"memory"}), ValidationError);
}
