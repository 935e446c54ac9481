#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "score/llm_gateway.hpp"
#include "score/story.hpp"

namespace score {

struct EpisodeSummary {
    std::string story_id;
    EpisodeIndex episode_index = 0;
    std::string synopsis;
    std::vector<std::string> plot_points;
    std::vector<CharacterAction> actions;
    std::vector<ItemInteraction> interactions;
    std::vector<std::string> relationships;
    std::vector<std::string> emotional_changes;
    SentimentScore sentiment;

    bool operator==(const EpisodeSummary&) const = default;
};

struct RetrievalDocument {
    std::string doc_id;
    std::string story_id;
    EpisodeIndex episode_index = 0;
    std::string text;

    bool operator==(const RetrievalDocument&) const = default;
};

/// Structured summary from the model plus a sentiment score of the episode
/// text. Throws ModelReplyError (stage "summarization") after one failed
/// repair attempt; gateway errors propagate.
EpisodeSummary summarize_episode(const std::string& story_id, const Episode& episode,
                                 const std::vector<KeyItem>& items, LlmGateway& gateway);

/// Summaries for every episode, in episode order, computed in parallel up to
/// the gateway's max_parallel.
std::vector<EpisodeSummary> summarize_story(const Story& story, LlmGateway& gateway);

/// Layout:
///   <synopsis>
///   ACTIONS:
///   - <character>: <description>
///   ITEMS:
///   - <item_id> | <actor> | <implied_state> | <description>
/// Absent actor/state are empty fields; '\', '|' and newlines in fields are
/// backslash-escaped. doc_id = story_id + "#" + episode_index.
RetrievalDocument build_retrieval_document(const EpisodeSummary& summary);

/// Reads the ITEMS section back. Inverse of the ITEMS part of the layout.
std::vector<ItemInteraction> parse_items_section(const RetrievalDocument& doc);

std::string document_id(const std::string& story_id, EpisodeIndex episode_index);

nlohmann::json summary_to_json(const EpisodeSummary& s);
EpisodeSummary summary_from_json(const nlohmann::json& j);

/// Summary file: `{story_id, summaries: [...]}`.
nlohmann::json summary_file_to_json(const std::string& story_id, const std::vector<EpisodeSummary>& summaries);
std::vector<EpisodeSummary> summary_file_from_json(const nlohmann::json& j);

}  // namespace score
