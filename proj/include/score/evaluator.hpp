#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "score/llm_gateway.hpp"
#include "score/retrieval.hpp"
#include "score/state_tracker.hpp"
#include "score/story.hpp"
#include "score/summarizer.hpp"

namespace score {

struct EpisodeRef {
    std::string story_id;
    EpisodeIndex episode_index = 0;

    auto operator<=>(const EpisodeRef&) const = default;
};

struct FacetScores {
    double character_consistency = 1.0;
    double plot_progression = 1.0;
    double emotional_authenticity = 1.0;
    double key_item_continuity = 1.0;

    double mean() const {
        return (character_consistency + plot_progression + emotional_authenticity + key_item_continuity) / 4.0;
    }
    bool operator==(const FacetScores&) const = default;
};

/// An item state claimed by a response, optionally tied to an episode.
struct ItemAssertion {
    std::string item_id;
    ItemState state = ItemState::active;
    EpisodeIndex episode_index = 0;

    bool operator==(const ItemAssertion&) const = default;
};

struct EpisodeEvaluation {
    EpisodeRef episode;
    FacetScores facet_scores;
    std::string rationale;
    /// Always a subset of the tracker's errors for this episode.
    std::vector<ContinuityError> continuity_errors_cited;
    /// Citations in the reply that the tracker does not know; dropped.
    std::size_t dropped_citations = 0;
    std::vector<ItemAssertion> item_states;
    nlohmann::json context_used;
};

struct QAResult {
    std::string story_id;
    std::string question;
    std::string answer;
    std::vector<EpisodeRef> supporting_episodes;
    std::optional<std::string> gold_answer;
    std::optional<bool> correct;
    nlohmann::json context_used;
};

/// What a run reports as the state of an item at an episode.
struct ItemStateReport {
    std::string story_id;
    std::string item_id;
    EpisodeIndex episode_index = 0;
    ItemState state = ItemState::active;

    bool operator==(const ItemStateReport&) const = default;
};

struct GoldQA {
    std::string story_id;
    std::string question;
    /// A phrase the answer must contain, e.g. "episode 4".
    std::string answer;
};

struct GoldStandard {
    std::vector<ItemStateReport> item_states;
    std::vector<GoldQA> qa;
};

/// Inputs for one evaluation beyond the episode itself. Pointers may be null
/// when the corresponding module is disabled.
struct EvaluationInputs {
    const EpisodeSummary* summary = nullptr;
    /// Errors with this episode as reappearance; empty when tracking is off.
    std::vector<ContinuityError> errors;
    /// States handed to the model as known facts.
    std::vector<ItemAssertion> item_states;
    SentimentScore focus_sentiment;
};

/// Facet scores from a structured reply. key_item_continuity is grounded:
/// any tracker error for the episode caps it at 3, citations the tracker does
/// not know are dropped, and every tracker error is cited. Throws
/// ModelReplyError (stage "evaluation") after one failed repair.
EpisodeEvaluation evaluate_episode(const Story& story, const Episode& episode, const EvaluationInputs& inputs,
                                   const ContextBundle& context, LlmGateway& gateway);

/// Answers from the bundle only. An empty bundle yields "insufficient
/// context" without calling the model. Supporting episodes outside the
/// bundle are discarded. When `gold` is given, `correct` is set by a
/// word-boundary match of the gold phrase in the answer.
QAResult answer_query(const std::string& story_id, const std::string& question, const ContextBundle& bundle,
                      LlmGateway& gateway, const std::optional<std::string>& gold = std::nullopt);

/// Deterministic assertion pass over free text: every sentence naming an
/// item alias, a state word from the lexicon and "episode N".
std::vector<ItemAssertion> extract_assertions(std::string_view text, const std::vector<KeyItem>& items);

/// Percentages in [0, 100]; nullopt where the inputs cannot support the
/// metric (reported as "n/a").
struct MetricValues {
    std::optional<double> consistency;
    std::optional<double> coherence;
    std::optional<double> item_status;
    std::optional<double> complex_qa;

    bool operator==(const MetricValues&) const = default;
};

struct MetricsReport {
    MetricValues overall;
    std::map<std::string, MetricValues> per_story;
    std::string config_digest;
};

struct MetricsInputs {
    const std::vector<EpisodeEvaluation>* evaluations = nullptr;
    const std::vector<QAResult>* qa = nullptr;
    const std::vector<ItemStateReport>* item_reports = nullptr;
    /// Corrected timelines; the consistency reference when gold is absent.
    const std::vector<StoryStates>* timelines = nullptr;
    const GoldStandard* gold = nullptr;
    /// Needed to read assertions from QA answers.
    const Corpus* corpus = nullptr;
};

/// consistency  = 100 * (1 - conflicting responses / responses)
/// coherence    = mean facet average, rescaled affinely from [1, 5]
/// item_status  = 100 * gold (item, episode) states matched / gold states
/// complex_qa   = 100 * correct / questions with a gold answer
MetricsReport compute_metrics(const MetricsInputs& in, std::string config_digest = {});

/// Facet scale [1, 5] onto [0, 100].
inline double rescale_facet(double v) { return (v - 1.0) / 4.0 * 100.0; }

nlohmann::json metric_values_to_json(const MetricValues& m);
nlohmann::json metrics_report_to_json(const MetricsReport& r);
nlohmann::json evaluation_to_json(const EpisodeEvaluation& e);
nlohmann::json qa_result_to_json(const QAResult& q);
nlohmann::json gold_to_json(const GoldStandard& g);
GoldStandard gold_from_json(const nlohmann::json& j);

}  // namespace score
