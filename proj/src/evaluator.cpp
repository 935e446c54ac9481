#include "score/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "score/error.hpp"
#include "score/mock_model.hpp"
#include "score/text.hpp"

namespace score {

using nlohmann::json;

namespace {

double facet(const json& scores, const char* name) {
    const auto& v = scores.at(name);
    if (!v.is_number()) throw std::runtime_error(std::string(name) + " is not a number");
    const double d = v.get<double>();
    if (!(d >= 1.0 && d <= 5.0)) throw std::runtime_error(std::string(name) + " outside [1, 5]");
    return d;
}

json context_entries(const ContextBundle& b) {
    json out = json::array();
    for (const auto& e : b.selected) {
        out.push_back({{"story_id", e.story_id},
                       {"episode_index", e.episode_index},
                       {"score", e.score},
                       {"sentiment", e.sentiment.value},
                       {"text", e.text}});
    }
    return out;
}

json assertion_list(const std::vector<ItemAssertion>& states) {
    json out = json::array();
    for (const auto& a : states) out.push_back({{"item_id", a.item_id}, {"state", std::string(to_string(a.state))}});
    return out;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json("n/a"); }

double percent(std::size_t num, std::size_t den) {
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EpisodeEvaluation evaluate_episode(const Story& story, const Episode& episode, const EvaluationInputs& inputs,
                                   const ContextBundle& context, LlmGateway& gateway) {
    json errors = json::array();
    for (const auto& e : inputs.errors) errors.push_back(continuity_error_to_json(e));
    json input = {{"story_id", story.story_id},
                  {"episode_index", episode.index},
                  {"text", episode.text},
                  {"has_summary", inputs.summary != nullptr},
                  {"summary", inputs.summary ? json(inputs.summary->synopsis) : json(nullptr)},
                  {"focus_sentiment", inputs.focus_sentiment.value},
                  {"continuity_errors", std::move(errors)},
                  {"item_states", assertion_list(inputs.item_states)},
                  {"context", context_entries(context)}};
    const auto prompt = gateway.prompts().render("evaluate_episode", {{"input", input.dump(2)}});

    return complete_structured(gateway, prompt, "evaluation", [&](const json& reply) {
        EpisodeEvaluation ev;
        ev.episode = {story.story_id, episode.index};
        const auto& scores = reply.at("facet_scores");
        ev.facet_scores = {facet(scores, "character_consistency"), facet(scores, "plot_progression"),
                           facet(scores, "emotional_authenticity"), facet(scores, "key_item_continuity")};
        ev.rationale = reply.value("rationale", "");

        std::set<std::pair<std::string, EpisodeIndex>> known;
        for (const auto& e : inputs.errors) known.insert({e.item_id, e.reappearance_episode});
        for (const auto& c : reply.value("cited_errors", json::array())) {
            const std::pair key{c.at("item_id").get<std::string>(), c.at("reappearance_episode").get<EpisodeIndex>()};
            if (!known.count(key)) ++ev.dropped_citations;
        }
        ev.continuity_errors_cited = inputs.errors;
        if (!inputs.errors.empty()) {
            ev.facet_scores.key_item_continuity = std::min(ev.facet_scores.key_item_continuity, 3.0);
        }

        for (const auto& s : reply.value("item_states", json::array())) {
            const auto id = s.at("item_id").get<std::string>();
            if (!story.find_item(id)) continue;
            const auto st = parse_item_state(s.at("state").get<std::string>());
            if (!st) throw std::runtime_error("invalid item state for '" + id + "'");
            ev.item_states.push_back({id, *st, episode.index});
        }
        ev.context_used = context_digest(context);
        return ev;
    });
}

QAResult answer_query(const std::string& story_id, const std::string& question, const ContextBundle& bundle,
                      LlmGateway& gateway, const std::optional<std::string>& gold) {
    if (text::trim(question).empty()) throw ContractError("empty question");
    QAResult result;
    result.story_id = story_id;
    result.question = question;
    result.gold_answer = gold;
    result.context_used = context_digest(bundle);

    if (bundle.selected.empty()) {
        result.answer = "insufficient context";
        if (gold) result.correct = false;
        return result;
    }

    const json input = {{"question", question}, {"context", context_entries(bundle)}};
    const auto prompt = gateway.prompts().render("answer_query", {{"input", input.dump(2)}});
    std::set<EpisodeRef> available;
    for (const auto& e : bundle.selected) available.insert({e.story_id, e.episode_index});

    complete_structured(gateway, prompt, "answer", [&](const json& reply) {
        result.answer = reply.at("answer").get<std::string>();
        result.supporting_episodes.clear();
        for (const auto& s : reply.value("supporting_episodes", json::array())) {
            EpisodeRef ref{s.at("story_id").get<std::string>(), s.at("episode_index").get<EpisodeIndex>()};
            if (available.count(ref) &&
                std::find(result.supporting_episodes.begin(), result.supporting_episodes.end(), ref) ==
                    result.supporting_episodes.end()) {
                result.supporting_episodes.push_back(std::move(ref));
            }
        }
        return 0;
    });
    if (gold) result.correct = text::contains_phrase(result.answer, *gold);
    return result;
}

std::vector<ItemAssertion> extract_assertions(std::string_view body, const std::vector<KeyItem>& items) {
    std::vector<ItemAssertion> out;
    for (const auto& span : text::sentence_spans(body)) {
        const auto sentence = body.substr(span.begin, span.size());
        const auto state = mock::classify_sentence(sentence);
        if (!state.lexicon_hit) continue;

        std::optional<EpisodeIndex> episode;
        const auto ws = text::words(sentence);
        for (std::size_t i = 0; i + 1 < ws.size() && !episode; ++i) {
            if (ws[i] != "episode") continue;
            const auto& n = ws[i + 1];
            if (!n.empty() && n.size() < 10 && std::all_of(n.begin(), n.end(), [](char c) { return c >= '0' && c <= '9'; })) {
                episode = static_cast<EpisodeIndex>(std::stoul(n));
            }
        }
        if (!episode) continue;
        for (const auto& item : items) {
            if (mock::mentions(sentence, item)) out.push_back({item.item_id, state.state, *episode});
        }
    }
    return out;
}

MetricsReport compute_metrics(const MetricsInputs& in, std::string config_digest) {
    static const std::vector<EpisodeEvaluation> no_evals;
    static const std::vector<QAResult> no_qa;
    static const std::vector<ItemStateReport> no_reports;
    static const std::vector<StoryStates> no_states;
    const auto& evals = in.evaluations ? *in.evaluations : no_evals;
    const auto& qa = in.qa ? *in.qa : no_qa;
    const auto& reports = in.item_reports ? *in.item_reports : no_reports;
    const auto& timelines = in.timelines ? *in.timelines : no_states;
    const bool gold_states = in.gold && !in.gold->item_states.empty();

    using Key = std::tuple<std::string, std::string, EpisodeIndex>;
    std::map<Key, ItemState> gold_map;
    if (gold_states)
        for (const auto& g : in.gold->item_states) gold_map[{g.story_id, g.item_id, g.episode_index}] = g.state;

    const auto reference = [&](const std::string& story, const ItemAssertion& a) -> std::optional<ItemState> {
        if (gold_states) {
            auto it = gold_map.find({story, a.item_id, a.episode_index});
            if (it == gold_map.end()) return std::nullopt;
            return it->second;
        }
        for (const auto& s : timelines) {
            if (s.story_id != story) continue;
            if (const auto* t = s.corrected_for(a.item_id)) return t->state_at(a.episode_index);
        }
        return std::nullopt;
    };
    const auto conflicts = [&](const std::string& story, const std::vector<ItemAssertion>& assertions) {
        return std::any_of(assertions.begin(), assertions.end(), [&](const ItemAssertion& a) {
            const auto ref = reference(story, a);
            return ref && *ref != a.state;
        });
    };

    std::set<std::string> stories;
    for (const auto& e : evals) stories.insert(e.episode.story_id);
    for (const auto& q : qa) stories.insert(q.story_id);
    for (const auto& r : reports) stories.insert(r.story_id);
    if (gold_states)
        for (const auto& g : in.gold->item_states) stories.insert(g.story_id);

    const auto compute = [&](const std::optional<std::string>& only) {
        const auto keep = [&](const std::string& id) { return !only || *only == id; };
        MetricValues m;

        std::size_t responses = 0, conflicting = 0;
        double facet_sum = 0.0;
        std::size_t n_evals = 0;
        for (const auto& e : evals) {
            if (!keep(e.episode.story_id)) continue;
            ++responses;
            conflicting += conflicts(e.episode.story_id, e.item_states) ? 1 : 0;
            facet_sum += e.facet_scores.mean();
            ++n_evals;
        }
        std::size_t qa_total = 0, qa_correct = 0;
        for (const auto& q : qa) {
            if (!keep(q.story_id)) continue;
            ++responses;
            if (in.corpus) {
                if (const auto* story = in.corpus->find(q.story_id)) {
                    conflicting += conflicts(q.story_id, extract_assertions(q.answer, story->key_items)) ? 1 : 0;
                }
            }
            if (q.correct) {
                ++qa_total;
                qa_correct += *q.correct ? 1 : 0;
            }
        }
        if (responses > 0) m.consistency = 100.0 - percent(conflicting, responses);
        if (n_evals > 0) m.coherence = rescale_facet(facet_sum / static_cast<double>(n_evals));
        if (qa_total > 0) m.complex_qa = percent(qa_correct, qa_total);

        if (gold_states) {
            std::map<Key, ItemState> reported;
            for (const auto& r : reports)
                if (keep(r.story_id)) reported[{r.story_id, r.item_id, r.episode_index}] = r.state;
            std::size_t total = 0, matched = 0;
            for (const auto& [key, state] : gold_map) {
                if (!keep(std::get<0>(key))) continue;
                ++total;
                auto it = reported.find(key);
                matched += (it != reported.end() && it->second == state) ? 1 : 0;
            }
            if (total > 0) m.item_status = percent(matched, total);
        }
        return m;
    };

    MetricsReport report;
    report.overall = compute(std::nullopt);
    for (const auto& s : stories) report.per_story[s] = compute(s);
    report.config_digest = std::move(config_digest);
    return report;
}

json metric_values_to_json(const MetricValues& m) {
    return {{"consistency", opt(m.consistency)},
            {"coherence", opt(m.coherence)},
            {"item_status", opt(m.item_status)},
            {"complex_qa", opt(m.complex_qa)}};
}

json metrics_report_to_json(const MetricsReport& r) {
    json per_story = json::object();
    for (const auto& [id, m] : r.per_story) per_story[id] = metric_values_to_json(m);
    json out = metric_values_to_json(r.overall);
    out["per_story"] = std::move(per_story);
    out["config_digest"] = r.config_digest;
    out["coherence_scale"] = "facet mean on [1,5] mapped affinely to [0,100]";
    return out;
}

json evaluation_to_json(const EpisodeEvaluation& e) {
    json cited = json::array();
    for (const auto& c : e.continuity_errors_cited) cited.push_back(continuity_error_to_json(c));
    return {{"story_id", e.episode.story_id},
            {"episode_index", e.episode.episode_index},
            {"facet_scores",
             {{"character_consistency", e.facet_scores.character_consistency},
              {"plot_progression", e.facet_scores.plot_progression},
              {"emotional_authenticity", e.facet_scores.emotional_authenticity},
              {"key_item_continuity", e.facet_scores.key_item_continuity}}},
            {"rationale", e.rationale},
            {"continuity_errors_cited", std::move(cited)},
            {"dropped_citations", e.dropped_citations},
            {"item_states", assertion_list(e.item_states)},
            {"context_used", e.context_used}};
}

json qa_result_to_json(const QAResult& q) {
    json support = json::array();
    for (const auto& s : q.supporting_episodes) support.push_back({{"story_id", s.story_id}, {"episode_index", s.episode_index}});
    return {{"story_id", q.story_id},
            {"question", q.question},
            {"answer", q.answer},
            {"supporting_episodes", std::move(support)},
            {"gold_answer", q.gold_answer ? json(*q.gold_answer) : json(nullptr)},
            {"correct", q.correct ? json(*q.correct) : json(nullptr)},
            {"context_used", q.context_used}};
}

json gold_to_json(const GoldStandard& g) {
    json states = json::array();
    for (const auto& s : g.item_states) {
        states.push_back({{"story_id", s.story_id},
                          {"item_id", s.item_id},
                          {"episode", s.episode_index},
                          {"state", std::string(to_string(s.state))}});
    }
    json qa = json::array();
    for (const auto& q : g.qa) qa.push_back({{"story_id", q.story_id}, {"question", q.question}, {"answer", q.answer}});
    return {{"item_states", std::move(states)}, {"qa", std::move(qa)}};
}

GoldStandard gold_from_json(const json& j) {
    try {
        GoldStandard g;
        for (const auto& s : j.value("item_states", json::array())) {
            const auto st = parse_item_state(s.at("state").get<std::string>());
            if (!st) throw ValidationError("gold.item_states.state", "invalid state");
            g.item_states.push_back({s.at("story_id").get<std::string>(), s.at("item_id").get<std::string>(),
                                     s.at("episode").get<EpisodeIndex>(), *st});
        }
        for (const auto& q : j.value("qa", json::array())) {
            g.qa.push_back({q.at("story_id").get<std::string>(), q.at("question").get<std::string>(),
                            q.at("answer").get<std::string>()});
        }
        return g;
    } catch (const json::exception& e) {
        throw ValidationError("gold", std::string("malformed gold file: ") + e.what());
    }
}

}  // namespace score
