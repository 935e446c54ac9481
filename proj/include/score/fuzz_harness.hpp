#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "score/evaluator.hpp"
#include "score/state_tracker.hpp"
#include "score/story.hpp"

namespace score {

struct FuzzSpec {
    std::uint64_t seed = 7;
    std::size_t n_stories = 10;
    std::size_t episodes_min = 10;
    std::size_t episodes_max = 15;
    std::size_t items_min = 1;
    std::size_t items_max = 3;
    /// Chance that a lost or destroyed item is brought back later.
    double violation_rate = 0.3;
    /// Share of those comebacks that come with an explanation (legal).
    double explained_rate = 0.2;

    /// Throws ValidationError.
    void validate() const;
};

nlohmann::json fuzz_spec_to_json(const FuzzSpec& s);

struct TrueState {
    EpisodeIndex episode = 0;
    ItemState state = ItemState::active;
};

struct TrueTimeline {
    std::string item_id;
    /// True state of every episode from the first mention to the end.
    std::vector<TrueState> states;
};

struct StoryTruth {
    std::string story_id;
    std::vector<TrueTimeline> timelines;
    std::vector<ContinuityError> planted_errors;
    /// Comebacks preceded by an explanation; never errors.
    std::vector<ContinuityError> explained_reappearances;
    std::vector<GoldQA> qa;
};

struct GroundTruth {
    std::uint64_t seed = 0;
    std::vector<StoryTruth> stories;

    std::vector<ContinuityError> planted_errors() const;
    GoldStandard gold() const;
};

nlohmann::json ground_truth_to_json(const GroundTruth& g);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

struct FuzzCorpus {
    Corpus corpus;
    GroundTruth truth;
};

/// Template-built stories whose event sentences use exactly the mock
/// extractor's state words. Deterministic in spec.seed.
FuzzCorpus generate_corpus(const FuzzSpec& spec);

struct DetectionScore {
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    /// Nothing reported or nothing planted; precision or recall was fixed by convention.
    bool degenerate = false;
};

/// Matches on (story, item_id, reappearance_episode). Precision is 1.0 when
/// nothing is reported; recall is 1.0 when nothing was planted.
DetectionScore score_detection(const std::vector<StoryStates>& reported, const GroundTruth& truth);
/// Single-story form; errors are matched on (item_id, reappearance_episode).
DetectionScore score_detection(const std::vector<ContinuityError>& reported,
                               const std::vector<ContinuityError>& planted);

nlohmann::json detection_score_to_json(const DetectionScore& s);

}  // namespace score
