#include "score/state_tracker.hpp"

#include <algorithm>
#include <map>

#include "score/error.hpp"
#include "score/llm_gateway.hpp"
#include "score/parallel.hpp"

namespace score {

using nlohmann::json;

namespace {

/// Raw per-episode view: last observation wins, explained if any observation is.
struct EpisodeReading {
    EpisodeIndex episode;
    ItemState state;
    bool explained;
};

std::vector<EpisodeReading> raw_readings(const ItemTimeline& timeline) {
    std::vector<EpisodeReading> out;
    for (const auto& obs : timeline.observations) {
        if (!out.empty() && out.back().episode == obs.episode_index) {
            out.back().state = obs.state;
            out.back().explained = out.back().explained || obs.explained;
        } else {
            out.push_back({obs.episode_index, obs.state, obs.explained});
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(ObservationSource s) {
    switch (s) {
        case ObservationSource::extracted_llm: return "extracted_llm";
        case ObservationSource::extracted_rule: return "extracted_rule";
        case ObservationSource::declared: break;
    }
    return "declared";
}

std::optional<ObservationSource> parse_observation_source(std::string_view s) {
    if (s == "declared") return ObservationSource::declared;
    if (s == "extracted_llm") return ObservationSource::extracted_llm;
    if (s == "extracted_rule") return ObservationSource::extracted_rule;
    return std::nullopt;
}

std::optional<ItemState> ItemTimeline::resolved_state(EpisodeIndex t) const {
    for (const auto& c : corrections)
        if (c.episode_index == t) return c.state;
    std::optional<ItemState> out;
    for (const auto& obs : observations) {
        if (obs.episode_index == t) out = obs.state;
        if (obs.episode_index > t) break;
    }
    return out;
}

std::optional<ItemState> ItemTimeline::state_at(EpisodeIndex t) const {
    std::optional<EpisodeIndex> latest;
    for (const auto& obs : observations) {
        if (obs.episode_index > t) break;
        latest = obs.episode_index;
    }
    if (!latest) return std::nullopt;
    return resolved_state(*latest);
}

std::vector<EpisodeIndex> ItemTimeline::observed_episodes() const {
    std::vector<EpisodeIndex> out;
    for (const auto& obs : observations)
        if (out.empty() || out.back() != obs.episode_index) out.push_back(obs.episode_index);
    return out;
}

ItemTimeline record_observation(const ItemTimeline& timeline, ItemObservation obs) {
    if (obs.item_id != timeline.item_id) {
        throw ContractError("observation for '" + obs.item_id + "' recorded on timeline of '" + timeline.item_id + "'");
    }
    if (obs.evidence && obs.evidence->begin > obs.evidence->end) throw ContractError("inverted evidence span");

    ItemTimeline out = timeline;
    auto pos = std::upper_bound(out.observations.begin(), out.observations.end(), obs.episode_index,
                                [](EpisodeIndex t, const ItemObservation& o) { return t < o.episode_index; });
    out.observations.insert(pos, std::move(obs));
    return out;
}

std::vector<ContinuityError> detect_continuity_errors(const ItemTimeline& timeline) {
    std::vector<ContinuityError> errors;
    const auto readings = raw_readings(timeline);
    for (std::size_t k = 1; k < readings.size(); ++k) {
        const auto& prior = readings[k - 1];
        const auto& current = readings[k];
        if (is_terminal(prior.state) && current.state == ItemState::active && !current.explained) {
            errors.push_back({timeline.item_id, prior.episode, prior.state, current.episode, ItemState::active, false});
        }
    }
    return errors;
}

ItemTimeline correct_timeline(const ItemTimeline& timeline, const std::vector<ContinuityError>& errors) {
    ItemTimeline out = timeline;
    for (const auto& e : errors) {
        if (e.item_id != timeline.item_id) continue;
        for (auto& obs : out.observations)
            if (obs.episode_index == e.reappearance_episode) obs.suppressed = true;

        auto it = std::find_if(out.corrections.begin(), out.corrections.end(),
                               [&](const StateCorrection& c) { return c.episode_index == e.reappearance_episode; });
        if (it == out.corrections.end()) {
            out.corrections.push_back({e.reappearance_episode, e.prior_state});
        } else {
            it->state = e.prior_state;
        }
    }
    std::sort(out.corrections.begin(), out.corrections.end(),
              [](const StateCorrection& a, const StateCorrection& b) { return a.episode_index < b.episode_index; });
    return out;
}

std::vector<ItemObservation> extract_item_statuses(const Episode& episode, const std::vector<KeyItem>& items,
                                                   LlmGateway& gateway, std::string_view prompt_name) {
    if (items.empty()) return {};
    json jitems = json::array();
    for (const auto& item : items) jitems.push_back({{"item_id", item.item_id}, {"names", item.names}});
    const json input = {{"episode_index", episode.index}, {"text", episode.text}, {"items", jitems}};
    const auto prompt = gateway.prompts().render(prompt_name, {{"input", input.dump(2)}});
    const auto source = gateway.rule_based() ? ObservationSource::extracted_rule : ObservationSource::extracted_llm;

    return complete_structured(gateway, prompt, "extraction", [&](const json& reply) {
        std::vector<ItemObservation> out;
        for (const auto& oj : reply.at("observations")) {
            ItemObservation obs;
            obs.item_id = oj.at("item_id").get<std::string>();
            const auto* item = [&]() -> const KeyItem* {
                for (const auto& i : items)
                    if (i.item_id == obs.item_id) return &i;
                return nullptr;
            }();
            if (!item) throw std::runtime_error("unknown item_id '" + obs.item_id + "'");
            const auto state = parse_item_state(oj.at("state").get<std::string>());
            if (!state) throw std::runtime_error("invalid state for '" + obs.item_id + "'");
            obs.state = *state;
            obs.episode_index = episode.index;
            obs.explained = oj.value("explained", false);
            obs.source = source;
            if (auto ev = oj.find("evidence"); ev != oj.end() && !ev->is_null()) {
                const auto b = ev->at(0).get<std::size_t>();
                const auto e = ev->at(1).get<std::size_t>();
                // Offsets outside the text are dropped rather than trusted.
                if (b <= e && e <= episode.text.size()) obs.evidence = text::Span{b, e};
            }
            out.push_back(std::move(obs));
        }
        return out;
    });
}

const ItemTimeline* StoryStates::corrected_for(std::string_view item_id) const {
    for (const auto& t : corrected)
        if (t.item_id == item_id) return &t;
    return nullptr;
}

StoryStates build_story_states(const std::string& story_id, std::vector<ItemObservation> observations,
                               const std::vector<KeyItem>& items) {
    StoryStates states;
    states.story_id = story_id;
    for (const auto& item : items) {
        ItemTimeline timeline{item.item_id, {}, {}};
        for (auto& obs : observations)
            if (obs.item_id == item.item_id) timeline = record_observation(timeline, obs);
        if (timeline.observations.empty()) continue;

        auto errors = detect_continuity_errors(timeline);
        states.corrected.push_back(correct_timeline(timeline, errors));
        states.raw.push_back(std::move(timeline));
        states.errors.insert(states.errors.end(), errors.begin(), errors.end());
    }
    std::stable_sort(states.errors.begin(), states.errors.end(), [](const auto& a, const auto& b) {
        return a.reappearance_episode < b.reappearance_episode;
    });
    return states;
}

StoryStates track_story(const Story& story, LlmGateway& gateway) {
    std::vector<std::vector<ItemObservation>> per_episode(story.episodes.size());
    parallel_for(story.episodes.size(), gateway.config().max_parallel, [&](std::size_t i) {
        per_episode[i] = extract_item_statuses(story.episodes[i], story.key_items, gateway);
    });
    std::vector<ItemObservation> all;
    for (auto& obs : per_episode) {
        all.insert(all.end(), std::make_move_iterator(obs.begin()), std::make_move_iterator(obs.end()));
    }
    return build_story_states(story.story_id, std::move(all), story.key_items);
}

json continuity_error_to_json(const ContinuityError& e) {
    return {{"item_id", e.item_id},
            {"prior_episode", e.prior_episode},
            {"prior_state", std::string(to_string(e.prior_state))},
            {"reappearance_episode", e.reappearance_episode},
            {"claimed_state", std::string(to_string(e.claimed_state))},
            {"explanation_found", e.explanation_found}};
}

ContinuityError continuity_error_from_json(const json& j) {
    ContinuityError e;
    e.item_id = j.at("item_id").get<std::string>();
    e.prior_episode = j.at("prior_episode").get<EpisodeIndex>();
    e.reappearance_episode = j.at("reappearance_episode").get<EpisodeIndex>();
    e.explanation_found = j.value("explanation_found", false);
    const auto prior = parse_item_state(j.at("prior_state").get<std::string>());
    const auto claimed = parse_item_state(j.value("claimed_state", "active"));
    if (!prior || !claimed) throw ValidationError("errors", "invalid state value");
    e.prior_state = *prior;
    e.claimed_state = *claimed;
    if (!is_terminal(e.prior_state) || e.claimed_state != ItemState::active ||
        e.prior_episode >= e.reappearance_episode) {
        throw ValidationError("errors", "continuity error for '" + e.item_id + "' violates its invariants");
    }
    return e;
}

json story_states_to_json(const StoryStates& states) {
    json timelines = json::array();
    // Stored raw; suppression is re-derived from the errors on load.
    for (const auto& t : states.raw) {
        json obs = json::array();
        for (const auto& o : t.observations) {
            obs.push_back({{"episode", o.episode_index},
                           {"state", std::string(to_string(o.state))},
                           {"explained", o.explained},
                           {"evidence", o.evidence ? json::array({o.evidence->begin, o.evidence->end}) : json(nullptr)},
                           {"source", std::string(to_string(o.source))}});
        }
        timelines.push_back({{"item_id", t.item_id}, {"observations", std::move(obs)}});
    }
    json errors = json::array();
    for (const auto& e : states.errors) errors.push_back(continuity_error_to_json(e));
    return {{"story_id", states.story_id}, {"timelines", std::move(timelines)}, {"errors", std::move(errors)}};
}

StoryStates story_states_from_json(const json& j) {
    try {
        StoryStates states;
        states.story_id = j.at("story_id").get<std::string>();
        for (const auto& e : j.at("errors")) states.errors.push_back(continuity_error_from_json(e));
        for (const auto& tj : j.at("timelines")) {
            ItemTimeline t{tj.at("item_id").get<std::string>(), {}, {}};
            for (const auto& oj : tj.at("observations")) {
                ItemObservation o;
                o.item_id = t.item_id;
                o.episode_index = oj.at("episode").get<EpisodeIndex>();
                const auto st = parse_item_state(oj.at("state").get<std::string>());
                if (!st) throw ValidationError("timelines.observations.state", "invalid state");
                o.state = *st;
                o.explained = oj.value("explained", false);
                if (auto ev = oj.find("evidence"); ev != oj.end() && !ev->is_null()) {
                    o.evidence = text::Span{ev->at(0).get<std::size_t>(), ev->at(1).get<std::size_t>()};
                }
                if (auto src = oj.find("source"); src != oj.end()) {
                    auto s = parse_observation_source(src->get<std::string>());
                    if (!s) throw ValidationError("timelines.observations.source", "invalid source");
                    o.source = *s;
                }
                t = record_observation(t, o);
            }
            std::vector<ContinuityError> mine;
            for (const auto& e : states.errors)
                if (e.item_id == t.item_id) mine.push_back(e);
            states.corrected.push_back(correct_timeline(t, mine));
            states.raw.push_back(std::move(t));
        }
        return states;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("states", std::string("malformed item-state file: ") + e.what());
    }
}

}  // namespace score
