#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "score/story.hpp"
#include "score/text.hpp"

namespace score {

class LlmGateway;

enum class ObservationSource { declared, extracted_llm, extracted_rule };

std::string_view to_string(ObservationSource s);
std::optional<ObservationSource> parse_observation_source(std::string_view s);

struct ItemObservation {
    std::string item_id;
    EpisodeIndex episode_index = 0;
    ItemState state = ItemState::active;
    std::optional<text::Span> evidence;
    ObservationSource source = ObservationSource::declared;
    /// The episode narratively reintroduces the item (repaired, recovered, ...).
    bool explained = false;
    /// Set by correct_timeline on observations overridden by a correction.
    bool suppressed = false;

    bool operator==(const ItemObservation&) const = default;
};

/// A corrected resolved state for one episode.
struct StateCorrection {
    EpisodeIndex episode_index = 0;
    ItemState state = ItemState::active;

    bool operator==(const StateCorrection&) const = default;
};

/// Observations of one item ordered by (episode_index, insertion order),
/// plus any corrections applied on top of them.
struct ItemTimeline {
    std::string item_id;
    std::vector<ItemObservation> observations;
    std::vector<StateCorrection> corrections;

    /// Resolved state of an episode that has observations: the correction if
    /// one exists, else the last observation in text order.
    std::optional<ItemState> resolved_state(EpisodeIndex t) const;

    /// Resolved state of the latest observed episode at or before t.
    std::optional<ItemState> state_at(EpisodeIndex t) const;

    /// Distinct observed episodes, ascending.
    std::vector<EpisodeIndex> observed_episodes() const;

    bool operator==(const ItemTimeline&) const = default;
};

struct ContinuityError {
    std::string item_id;
    EpisodeIndex prior_episode = 0;
    ItemState prior_state = ItemState::lost;
    EpisodeIndex reappearance_episode = 0;
    ItemState claimed_state = ItemState::active;
    bool explanation_found = false;

    bool operator==(const ContinuityError&) const = default;
};

/// Returns a copy of `timeline` with `obs` inserted after every observation
/// whose episode_index is <= obs.episode_index. Throws ContractError when the
/// item ids differ or the evidence span is inverted.
ItemTimeline record_observation(const ItemTimeline& timeline, ItemObservation obs);

/// One error per transition into `active` (unexplained) from an episode whose
/// raw resolved state was lost or destroyed. Reads raw observations only, so
/// corrections and suppression markers do not affect the result.
std::vector<ContinuityError> detect_continuity_errors(const ItemTimeline& timeline);

/// For each error, marks the observations at the reappearance episode as
/// suppressed and records a correction to the prior terminal state.
/// Idempotent.
ItemTimeline correct_timeline(const ItemTimeline& timeline, const std::vector<ContinuityError>& errors);

/// Asks the gateway for the state of every key item mentioned in `episode`,
/// using the named prompt template. Throws ModelReplyError (stage
/// "extraction") when the reply is unusable; gateway errors propagate.
std::vector<ItemObservation> extract_item_statuses(const Episode& episode, const std::vector<KeyItem>& items,
                                                   LlmGateway& gateway,
                                                   std::string_view prompt_name = "extract_item_states");

/// Timelines for every key item of a story, in key_items order. Items never
/// observed get no timeline.
struct StoryStates {
    std::string story_id;
    std::vector<ItemTimeline> raw;
    std::vector<ItemTimeline> corrected;
    std::vector<ContinuityError> errors;

    const ItemTimeline* corrected_for(std::string_view item_id) const;
};

StoryStates build_story_states(const std::string& story_id, std::vector<ItemObservation> observations,
                               const std::vector<KeyItem>& items);

StoryStates track_story(const Story& story, LlmGateway& gateway);

/// Item-state file: `{story_id, timelines:[{item_id, observations:[...]}], errors:[...]}`.
/// Timelines are stored raw; loading re-applies the recorded errors.
nlohmann::json story_states_to_json(const StoryStates& states);
StoryStates story_states_from_json(const nlohmann::json& j);

nlohmann::json continuity_error_to_json(const ContinuityError& e);
ContinuityError continuity_error_from_json(const nlohmann::json& j);

}  // namespace score
