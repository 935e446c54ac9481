#include "score/retrieval.hpp"

#include <cmath>

#include "score/error.hpp"
#include "score/text.hpp"

namespace score {

using nlohmann::json;

void RetrievalConfig::validate() const {
    if (top_n == 0) throw ValidationError("retrieval.top_n", "must be positive");
    if (!(sentiment_tolerance >= 0.0 && sentiment_tolerance <= 1.0)) {
        throw ValidationError("retrieval.sentiment_tolerance", "must lie in [0, 1]");
    }
    if (candidate_pool != 0 && candidate_pool < top_n) {
        throw ValidationError("retrieval.candidate_pool", "must be at least top_n");
    }
    if (context_char_budget == 0) throw ValidationError("retrieval.context_char_budget", "must be positive");
}

json retrieval_config_to_json(const RetrievalConfig& c) {
    return {{"top_n", c.top_n},
            {"sentiment_tolerance", c.sentiment_tolerance},
            {"candidate_pool", c.pool_size()},
            {"exclude_self", c.exclude_self},
            {"context_char_budget", c.context_char_budget},
            {"sentiment_filter", c.sentiment_filter},
            {"filter_queries", c.filter_queries}};
}

RetrievalConfig retrieval_config_from_json(const json& j, RetrievalConfig base) {
    if (!j.is_object()) throw ValidationError("retrieval", "must be an object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "top_n") base.top_n = value.get<std::size_t>();
            else if (key == "sentiment_tolerance") base.sentiment_tolerance = value.get<double>();
            else if (key == "candidate_pool") base.candidate_pool = value.get<std::size_t>();
            else if (key == "exclude_self") base.exclude_self = value.get<bool>();
            else if (key == "context_char_budget") base.context_char_budget = value.get<std::size_t>();
            else if (key == "sentiment_filter") base.sentiment_filter = value.get<bool>();
            else if (key == "filter_queries") base.filter_queries = value.get<bool>();
            else throw ValidationError("retrieval." + key, "unknown key");
        }
    } catch (const json::exception& e) {
        throw ValidationError("retrieval", std::string("wrong value type: ") + e.what());
    }
    base.validate();
    return base;
}

const StoredDocument* DocumentStore::find(const std::string& entry_id) const {
    auto it = docs_.find(entry_id);
    return it == docs_.end() ? nullptr : &it->second;
}

std::size_t ContextBundle::total_chars() const {
    std::size_t n = 0;
    for (const auto& e : selected) n += e.text.size();
    return n;
}

json context_bundle_to_json(const ContextBundle& b) {
    json selected = json::array();
    for (const auto& e : b.selected) {
        selected.push_back({{"entry_id", e.entry_id},
                            {"story_id", e.story_id},
                            {"episode_index", e.episode_index},
                            {"score", e.score},
                            {"sentiment", e.sentiment.value},
                            {"text", e.text}});
    }
    return {{"focus", b.focus},
            {"selected", std::move(selected)},
            {"truncated", b.truncated},
            {"sentiment_filter_applied", b.sentiment_filter_applied},
            {"sentiment_filter_bypassed", b.sentiment_filter_bypassed}};
}

json context_digest(const ContextBundle& b) {
    json selected = json::array();
    for (const auto& e : b.selected) {
        selected.push_back({{"entry_id", e.entry_id}, {"score", e.score}, {"sentiment", e.sentiment.value}});
    }
    return {{"selected", std::move(selected)},
            {"truncated", b.truncated},
            {"sentiment_filter_applied", b.sentiment_filter_applied},
            {"sentiment_filter_bypassed", b.sentiment_filter_bypassed}};
}

ContextBundle select_context(std::string focus, const Embedding& query, std::optional<SentimentScore> focus_sentiment,
                             const FlatIndex& index, const DocumentStore& docs, const RetrievalConfig& config,
                             const RetrievalScope& scope) {
    config.validate();
    const FlatIndex::Filter in_scope = [&](const IndexEntry& e) {
        if (scope.story_id && e.story_id != *scope.story_id) return false;
        if (scope.exclude_episode && e.episode_index == *scope.exclude_episode) return false;
        if (scope.before_episode && e.episode_index >= *scope.before_episode) return false;
        return true;
    };
    std::size_t scope_size = 0;
    for (const auto& e : index.entries()) scope_size += in_scope(e) ? 1 : 0;

    ContextBundle bundle;
    bundle.focus = std::move(focus);
    bundle.sentiment_filter_applied = config.sentiment_filter && focus_sentiment.has_value();

    const auto document = [&](const std::string& id) -> const StoredDocument& {
        const auto* doc = docs.find(id);
        if (!doc) throw ValidationError("index", "entry '" + id + "' has no stored document");
        return *doc;
    };
    const auto passes = [&](const SearchHit& hit) {
        if (!bundle.sentiment_filter_applied) return true;
        return std::abs(focus_sentiment->value - document(hit.entry_id).sentiment.value) <=
               config.sentiment_tolerance;
    };

    std::vector<SearchHit> chosen;
    if (scope_size > 0) {
        std::size_t pool = std::max(config.pool_size(), config.top_n);
        while (true) {
            const auto hits = index.search_top_n(query, pool, in_scope);
            chosen.clear();
            for (const auto& hit : hits) {
                if (chosen.size() == config.top_n) break;
                if (passes(hit)) chosen.push_back(hit);
            }
            // Widening never changes the order of earlier hits, so stopping as
            // soon as top_n survive (or the scope is exhausted) gives the same
            // answer as filtering the whole scope.
            if (chosen.size() == config.top_n || hits.size() >= scope_size) break;
            pool *= 2;
        }
        if (chosen.empty()) {
            chosen = index.search_top_n(query, config.top_n, in_scope);
            bundle.sentiment_filter_bypassed = true;
        }
    }

    std::size_t used = 0;
    for (const auto& hit : chosen) {
        const auto& entry = *index.find(hit.entry_id);
        const auto& doc = document(hit.entry_id);
        if (used + doc.text.size() > config.context_char_budget) {
            bundle.truncated = true;
            break;
        }
        used += doc.text.size();
        bundle.selected.push_back({hit.entry_id, entry.story_id, entry.episode_index, hit.score, doc.sentiment, doc.text});
    }
    return bundle;
}

namespace {

void require_searchable(const FlatIndex& index) {
    if (!index.frozen()) throw ContractError("retrieval needs a frozen index");
    if (index.empty()) throw Error(ErrorKind::validation, "index empty");
}

}  // namespace

ContextBundle retrieve_related(const std::string& focus_text, SentimentScore focus_sentiment, const FlatIndex& index,
                               const DocumentStore& docs, const RetrievalConfig& config, LlmGateway& gateway,
                               const RetrievalScope& scope) {
    require_searchable(index);
    const auto query = gateway.embed({focus_text}).at(0);
    return select_context(focus_text, query, focus_sentiment, index, docs, config, scope);
}

ContextBundle retrieve_for_query(const std::string& question, const FlatIndex& index, const DocumentStore& docs,
                                 const RetrievalConfig& config, LlmGateway& gateway, const RetrievalScope& scope) {
    if (text::trim(question).empty()) throw ContractError("empty question");
    require_searchable(index);
    const auto query = gateway.embed({question}).at(0);
    std::optional<SentimentScore> sentiment;
    if (config.filter_queries && config.sentiment_filter) sentiment = gateway.score_sentiment(question);
    return select_context(question, query, sentiment, index, docs, config, scope);
}

}  // namespace score
