#include "score/summarizer.hpp"

#include <sstream>

#include "score/error.hpp"
#include "score/parallel.hpp"
#include "score/text.hpp"

namespace score {

using nlohmann::json;

namespace {

/// Backslash-escapes '\\', '|', CR/LF, and spaces at either end (as "\\s") so
/// the " | " separators stay unambiguous.
std::string escape_field(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '|': out += "\\|"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case ' ': out += (i == 0 || i + 1 == s.size()) ? "\\s" : " "; break;
            default: out += c;
        }
    }
    return out;
}

std::string unescape_field(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            const char n = s[++i];
            out += n == 'n' ? '\n' : n == 'r' ? '\r' : n == 's' ? ' ' : n;
        } else {
            out += s[i];
        }
    }
    return out;
}

/// Splits on unescaped '|', drops the single padding space next to each
/// separator, then unescapes.
std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string_view> raw;
    std::size_t start = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\') {
            ++i;
        } else if (line[i] == '|') {
            raw.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    raw.push_back(line.substr(start));
    std::vector<std::string> out;
    for (std::size_t k = 0; k < raw.size(); ++k) {
        auto f = raw[k];
        if (k > 0 && !f.empty() && f.front() == ' ') f.remove_prefix(1);
        if (k + 1 < raw.size() && !f.empty() && f.back() == ' ') f.remove_suffix(1);
        out.push_back(unescape_field(f));
    }
    return out;
}

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        for (const auto& v : *it) out.push_back(v.get<std::string>());
    }
    return out;
}

std::optional<std::string> optional_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    auto s = it->get<std::string>();
    if (text::trim(s).empty()) return std::nullopt;
    return s;
}

std::optional<ItemState> optional_state(const json& j, const char* key) {
    auto s = optional_string(j, key);
    if (!s) return std::nullopt;
    auto st = parse_item_state(*s);
    if (!st) throw std::runtime_error(std::string(key) + ": invalid state '" + *s + "'");
    return st;
}

}  // namespace

std::string document_id(const std::string& story_id, EpisodeIndex episode_index) {
    return story_id + "#" + std::to_string(episode_index);
}

EpisodeSummary summarize_episode(const std::string& story_id, const Episode& episode,
                                 const std::vector<KeyItem>& items, LlmGateway& gateway) {
    json jitems = json::array();
    for (const auto& item : items) jitems.push_back({{"item_id", item.item_id}, {"names", item.names}});
    const json input = {{"story_id", story_id}, {"episode_index", episode.index}, {"text", episode.text}, {"items", jitems}};
    const auto prompt = gateway.prompts().render("summarize_episode", {{"input", input.dump(2)}});

    auto summary = complete_structured(gateway, prompt, "summarization", [&](const json& reply) {
        EpisodeSummary s;
        s.story_id = story_id;
        s.episode_index = episode.index;
        s.synopsis = reply.at("synopsis").get<std::string>();
        if (text::trim(s.synopsis).empty()) throw std::runtime_error("synopsis is empty");
        s.plot_points = string_list(reply, "plot_points");
        s.relationships = string_list(reply, "relationships");
        s.emotional_changes = string_list(reply, "emotional_changes");
        for (const auto& a : reply.value("actions", json::array())) {
            CharacterAction action{a.at("character").get<std::string>(), episode.index,
                                   a.at("description").get<std::string>()};
            if (text::trim(action.description).empty()) throw std::runtime_error("action without description");
            s.actions.push_back(std::move(action));
        }
        for (const auto& ij : reply.value("interactions", json::array())) {
            ItemInteraction in;
            in.item_id = ij.at("item_id").get<std::string>();
            bool declared = false;
            for (const auto& item : items) declared = declared || item.item_id == in.item_id;
            if (!declared) throw std::runtime_error("interaction with undeclared item '" + in.item_id + "'");
            in.episode_index = episode.index;
            in.actor = optional_string(ij, "actor");
            in.description = ij.at("description").get<std::string>();
            in.implied_state = optional_state(ij, "implied_state");
            s.interactions.push_back(std::move(in));
        }
        return s;
    });
    summary.sentiment = gateway.score_sentiment(episode.text);
    return summary;
}

std::vector<EpisodeSummary> summarize_story(const Story& story, LlmGateway& gateway) {
    std::vector<EpisodeSummary> out(story.episodes.size());
    parallel_for(story.episodes.size(), gateway.config().max_parallel, [&](std::size_t i) {
        out[i] = summarize_episode(story.story_id, story.episodes[i], story.key_items, gateway);
    });
    return out;
}

RetrievalDocument build_retrieval_document(const EpisodeSummary& summary) {
    std::ostringstream text;
    text << summary.synopsis << "\nACTIONS:";
    for (const auto& a : summary.actions) {
        text << "\n- " << escape_field(a.character) << ": " << escape_field(a.description);
    }
    text << "\nITEMS:";
    for (const auto& in : summary.interactions) {
        text << "\n- " << escape_field(in.item_id) << " | " << escape_field(in.actor.value_or("")) << " | "
             << (in.implied_state ? to_string(*in.implied_state) : "") << " | " << escape_field(in.description);
    }
    return {document_id(summary.story_id, summary.episode_index), summary.story_id, summary.episode_index,
            text.str()};
}

std::vector<ItemInteraction> parse_items_section(const RetrievalDocument& doc) {
    std::vector<ItemInteraction> out;
    const auto marker = doc.text.rfind("\nITEMS:");
    if (marker == std::string::npos) throw ValidationError("document", "no ITEMS section in " + doc.doc_id);
    std::istringstream lines(doc.text.substr(marker + 7));
    for (std::string line; std::getline(lines, line);) {
        if (line.empty()) continue;
        if (line.rfind("- ", 0) != 0) throw ValidationError("document", "malformed ITEMS line in " + doc.doc_id);
        auto fields = split_fields(std::string_view(line).substr(2));
        if (fields.size() != 4) throw ValidationError("document", "ITEMS line needs 4 fields in " + doc.doc_id);
        ItemInteraction in;
        in.item_id = fields[0];
        in.episode_index = doc.episode_index;
        if (!fields[1].empty()) in.actor = fields[1];
        if (!fields[2].empty()) {
            in.implied_state = parse_item_state(fields[2]);
            if (!in.implied_state) throw ValidationError("document", "bad state in ITEMS line of " + doc.doc_id);
        }
        in.description = fields[3];
        out.push_back(std::move(in));
    }
    return out;
}

json summary_to_json(const EpisodeSummary& s) {
    json actions = json::array();
    for (const auto& a : s.actions) {
        actions.push_back({{"character", a.character}, {"episode_index", a.episode_index}, {"description", a.description}});
    }
    json interactions = json::array();
    for (const auto& in : s.interactions) {
        interactions.push_back({{"item_id", in.item_id},
                                {"episode_index", in.episode_index},
                                {"actor", in.actor ? json(*in.actor) : json(nullptr)},
                                {"description", in.description},
                                {"implied_state", in.implied_state ? json(std::string(to_string(*in.implied_state))) : json(nullptr)}});
    }
    return {{"story_id", s.story_id},
            {"episode_index", s.episode_index},
            {"synopsis", s.synopsis},
            {"plot_points", s.plot_points},
            {"actions", std::move(actions)},
            {"interactions", std::move(interactions)},
            {"relationships", s.relationships},
            {"emotional_changes", s.emotional_changes},
            {"sentiment", s.sentiment.value}};
}

EpisodeSummary summary_from_json(const json& j) {
    try {
        EpisodeSummary s;
        s.story_id = j.at("story_id").get<std::string>();
        s.episode_index = j.at("episode_index").get<EpisodeIndex>();
        s.synopsis = j.at("synopsis").get<std::string>();
        if (text::trim(s.synopsis).empty()) throw ValidationError("summaries.synopsis", "must be non-empty");
        s.plot_points = string_list(j, "plot_points");
        s.relationships = string_list(j, "relationships");
        s.emotional_changes = string_list(j, "emotional_changes");
        for (const auto& a : j.at("actions")) {
            s.actions.push_back({a.at("character").get<std::string>(), a.at("episode_index").get<EpisodeIndex>(),
                                 a.at("description").get<std::string>()});
        }
        for (const auto& ij : j.at("interactions")) {
            ItemInteraction in;
            in.item_id = ij.at("item_id").get<std::string>();
            in.episode_index = ij.at("episode_index").get<EpisodeIndex>();
            in.actor = optional_string(ij, "actor");
            in.description = ij.at("description").get<std::string>();
            in.implied_state = optional_state(ij, "implied_state");
            s.interactions.push_back(std::move(in));
        }
        const double v = j.at("sentiment").get<double>();
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("summaries.sentiment", "must lie in [0, 1]");
        s.sentiment = SentimentScore{v};
        return s;
    } catch (const json::exception& e) {
        throw ValidationError("summaries", std::string("malformed summary: ") + e.what());
    } catch (const std::runtime_error& e) {
        if (dynamic_cast<const Error*>(&e)) throw;
        throw ValidationError("summaries", e.what());
    }
}

json summary_file_to_json(const std::string& story_id, const std::vector<EpisodeSummary>& summaries) {
    json arr = json::array();
    for (const auto& s : summaries) arr.push_back(summary_to_json(s));
    return {{"story_id", story_id}, {"summaries", std::move(arr)}};
}

std::vector<EpisodeSummary> summary_file_from_json(const json& j) {
    std::vector<EpisodeSummary> out;
    try {
        for (const auto& s : j.at("summaries")) out.push_back(summary_from_json(s));
    } catch (const json::exception& e) {
        throw ValidationError("summaries", std::string("malformed summary file: ") + e.what());
    }
    return out;
}

}  // namespace score
