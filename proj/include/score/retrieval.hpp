#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "score/llm_gateway.hpp"
#include "score/vector_index.hpp"

namespace score {

struct RetrievalConfig {
    std::size_t top_n = 5;
    double sentiment_tolerance = 0.3;
    /// 0 means 4 * top_n.
    std::size_t candidate_pool = 0;
    bool exclude_self = true;
    std::size_t context_char_budget = 12'000;
    /// Off for the "w/o sentiment" ablation: tolerance is ignored.
    bool sentiment_filter = true;
    /// Applies the sentiment filter to free-text questions as well.
    bool filter_queries = true;

    std::size_t pool_size() const { return candidate_pool ? candidate_pool : 4 * top_n; }
    /// Throws ValidationError.
    void validate() const;
};

nlohmann::json retrieval_config_to_json(const RetrievalConfig& c);
RetrievalConfig retrieval_config_from_json(const nlohmann::json& j, RetrievalConfig base = {});

/// Text and sentiment behind each index entry.
struct StoredDocument {
    std::string text;
    SentimentScore sentiment;
};

class DocumentStore {
public:
    void put(const std::string& entry_id, StoredDocument doc) { docs_[entry_id] = std::move(doc); }
    const StoredDocument* find(const std::string& entry_id) const;
    std::size_t size() const { return docs_.size(); }

private:
    std::map<std::string, StoredDocument, std::less<>> docs_;
};

/// Restricts candidates to one story, optionally excluding the focus episode
/// and everything from `before_episode` on.
struct RetrievalScope {
    std::optional<std::string> story_id;
    std::optional<EpisodeIndex> exclude_episode;
    std::optional<EpisodeIndex> before_episode;
};

struct ContextEntry {
    std::string entry_id;
    std::string story_id;
    EpisodeIndex episode_index = 0;
    double score = 0.0;
    SentimentScore sentiment;
    std::string text;

    bool operator==(const ContextEntry&) const = default;
};

struct ContextBundle {
    std::string focus;
    std::vector<ContextEntry> selected;
    /// Entries dropped from the tail to fit context_char_budget.
    bool truncated = false;
    /// Every candidate failed the sentiment filter; selection fell back to
    /// similarity alone.
    bool sentiment_filter_bypassed = false;
    bool sentiment_filter_applied = false;

    std::size_t total_chars() const;
    bool operator==(const ContextBundle&) const = default;
};

nlohmann::json context_bundle_to_json(const ContextBundle& b);
/// Entry references and scores only, for reports.
nlohmann::json context_digest(const ContextBundle& b);

/// Selection core, independent of the gateway: rank entries in scope by
/// cosine to `query`, drop those whose sentiment differs from
/// `focus_sentiment` by more than the tolerance, keep the best top_n. The
/// candidate pool starts at pool_size() and widens while fewer than top_n
/// survive, so the result equals filter-then-top-N over the whole scope. If no
/// entry in scope survives, the top_n by similarity are returned with
/// sentiment_filter_bypassed set. Finally whole entries are dropped from the
/// tail until the text fits the character budget.
ContextBundle select_context(std::string focus, const Embedding& query, std::optional<SentimentScore> focus_sentiment,
                             const FlatIndex& index, const DocumentStore& docs, const RetrievalConfig& config,
                             const RetrievalScope& scope);

/// Embeds `focus_text` and runs select_context. Throws when the index is not
/// frozen or is empty.
ContextBundle retrieve_related(const std::string& focus_text, SentimentScore focus_sentiment, const FlatIndex& index,
                               const DocumentStore& docs, const RetrievalConfig& config, LlmGateway& gateway,
                               const RetrievalScope& scope = {});

/// As retrieve_related with the focus sentiment scored from the question.
/// Throws ContractError for an empty question.
ContextBundle retrieve_for_query(const std::string& question, const FlatIndex& index, const DocumentStore& docs,
                                 const RetrievalConfig& config, LlmGateway& gateway, const RetrievalScope& scope = {});

}  // namespace score
