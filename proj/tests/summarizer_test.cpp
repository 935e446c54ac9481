#include <doctest.h>

#include "score/error.hpp"
#include "score/file_io.hpp"
#include "score/summarizer.hpp"
#include "support.hpp"

using namespace score;
using nlohmann::json;
using score::testing::fixture;
using score::testing::mock_config;
using score::testing::TempDir;

namespace {

struct GoldenInput {
    std::string story_id;
    std::vector<KeyItem> items;
    Episode episode;
};

GoldenInput golden_input() {
    const auto j = json::parse(read_file(fixture("summary_golden/input.json")));
    GoldenInput in;
    in.story_id = j.at("story_id").get<std::string>();
    for (const auto& item : j.at("key_items")) {
        in.items.push_back({item.at("item_id").get<std::string>(), item.at("names").get<std::vector<std::string>>()});
    }
    in.episode = make_episode(j.at("episode").at("index").get<EpisodeIndex>(),
                              j.at("episode").at("text").get<std::string>());
    return in;
}

EpisodeSummary bare_summary() {
    EpisodeSummary s;
    s.story_id = "s";
    s.episode_index = 2;
    s.synopsis = "Quiet day.";
    return s;
}

}  // namespace

TEST_CASE("mock summary matches the golden fixture") {
    const auto in = golden_input();
    LlmGateway gw(mock_config());
    const auto summary = summarize_episode(in.story_id, in.episode, in.items, gw);
    const auto expected = json::parse(read_file(fixture("summary_golden/summary.json")));
    CHECK(summary_to_json(summary) == expected);
    CHECK(summary_from_json(expected) == summary);
    CHECK(build_retrieval_document(summary).text == read_file(fixture("summary_golden/document.txt")));
}

TEST_CASE("episode without item mentions has no interactions") {
    LlmGateway gw(mock_config());
    const auto s = summarize_episode("s", make_episode(0, "Mira walked home. The rain fell."), {{"sword", {"sword"}}}, gw);
    CHECK(s.interactions.empty());
    CHECK(s.synopsis == "Mira walked home. The rain fell.");
}

TEST_CASE("replayed summaries are identical") {
    TempDir dir;
    const auto in = golden_input();
    EpisodeSummary recorded;
    {
        LlmGateway gw(mock_config(CacheMode::record, dir.path()));
        recorded = summarize_episode(in.story_id, in.episode, in.items, gw);
    }
    LlmGateway replay(mock_config(CacheMode::replay, dir.path()));
    CHECK(summarize_episode(in.story_id, in.episode, in.items, replay) == recorded);
    CHECK(summarize_episode(in.story_id, in.episode, in.items, replay) == recorded);
    CHECK(replay.stats().upstream_calls == 0);
}

TEST_CASE("empty summary renders synopsis plus section headers") {
    const auto doc = build_retrieval_document(bare_summary());
    CHECK(doc.text == "Quiet day.\nACTIONS:\nITEMS:");
    CHECK(doc.doc_id == "s#2");
    CHECK(doc.episode_index == 2);
}

TEST_CASE("action order is preserved in the document") {
    auto a = bare_summary();
    a.actions = {{"Mira", 2, "ran"}, {"Tomas", 2, "hid"}};
    auto b = a;
    std::swap(b.actions[0], b.actions[1]);
    CHECK(build_retrieval_document(a).text != build_retrieval_document(b).text);
}

TEST_CASE("ITEMS section round-trips, escapes included") {
    auto s = bare_summary();
    s.interactions = {
        {"sword", 2, std::string("Mira"), "took it", ItemState::active},
        {"ring", 2, std::nullopt, "a | pipe, a \\ slash\nand a newline", ItemState::lost},
        {"map", 2, std::string("Tomas | Jr"), "burned", ItemState::destroyed},
        {"cup", 2, std::nullopt, "", std::nullopt},
    };
    CHECK(parse_items_section(build_retrieval_document(s)) == s.interactions);
}

TEST_CASE("summary file round-trip") {
    const auto in = golden_input();
    LlmGateway gw(mock_config());
    Story story = score::testing::make_story("story", {in.episode.text, "The blade broke? No, it held."}, in.items);
    const auto all = summarize_story(story, gw);
    REQUIRE(all.size() == 2);
    CHECK(all[1].episode_index == 1);
    CHECK(summary_file_from_json(summary_file_to_json("story", all)) == all);
}
