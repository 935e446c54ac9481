#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "score/chunker.hpp"
#include "score/evaluator.hpp"
#include "score/llm_gateway.hpp"
#include "score/retrieval.hpp"
#include "score/state_tracker.hpp"
#include "score/summarizer.hpp"

namespace score {

/// Module switches. A disabled module is skipped, not simulated.
struct Ablation {
    bool tracking = true;
    bool summary = true;
    bool retrieval = true;
    bool sentiment = true;

    /// Names of the disabled modules, in fixed order.
    std::vector<std::string> disabled() const;
    /// Disables each named module; throws ValidationError for unknown names.
    void disable(const std::vector<std::string>& names);
    /// Everything off: the model alone, given the preceding episodes.
    static Ablation baseline() { return {false, false, false, false}; }

    bool operator==(const Ablation&) const = default;
};

struct RunConfig {
    GatewayConfig gateway;
    RetrievalConfig retrieval;
    ChunkerConfig chunker;
    Ablation ablation;
};

/// Effective configuration as embedded in reports (sentiment ablation already
/// folded into retrieval.sentiment_filter).
nlohmann::json run_config_to_json(const RunConfig& c);
/// Reads `{gateway, retrieval, chunker, ablate}`; absent keys keep `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
/// SHA-256 hex of the canonical effective configuration.
std::string config_digest(const RunConfig& c);
/// Retrieval settings after applying the ablation.
RetrievalConfig effective_retrieval(const RunConfig& c);

/// Index and the texts behind it.
struct RetrievalStore {
    FlatIndex index;
    DocumentStore docs;

    explicit RetrievalStore(std::uint32_t dim) : index(dim) {}
};

/// One summary document per episode; sentiment from the summary.
RetrievalStore build_summary_store(const std::vector<EpisodeSummary>& summaries, LlmGateway& gateway);
/// One raw-text document per episode (used when summaries are disabled).
RetrievalStore build_episode_store(const Corpus& corpus, LlmGateway& gateway);
/// Overlapping chunks of the raw text.
RetrievalStore build_chunk_store(const Corpus& corpus, const ChunkerConfig& chunker, LlmGateway& gateway);

/// Per-story outputs of the summarizer and tracker.
struct Artifacts {
    std::map<std::string, std::vector<EpisodeSummary>> summaries;
    std::map<std::string, StoryStates> states;
    /// Episode-level store matching the summary switch.
    std::shared_ptr<const RetrievalStore> store;
};

/// Computes whatever the ablation needs that `existing` lacks.
Artifacts prepare_artifacts(const Corpus& corpus, const RunConfig& config, LlmGateway& gateway,
                            Artifacts existing = {});

/// The model's own per-episode reading of item states, with no history.
std::vector<ItemObservation> report_item_states(const Episode& episode, const std::vector<KeyItem>& items,
                                                LlmGateway& gateway);

struct RunResult {
    RunConfig config;
    std::string run_id;
    std::vector<EpisodeEvaluation> evaluations;
    std::vector<QAResult> qa;
    std::vector<ItemStateReport> item_reports;
    MetricsReport metrics;
};

struct RunOptions {
    /// Evaluate only this episode; QA is skipped.
    std::optional<EpisodeRef> only_episode;
    bool run_qa = true;
};

/// Evaluates every episode, answers the gold questions and computes metrics.
RunResult run_evaluation(const Corpus& corpus, const Artifacts& artifacts, const RunConfig& config,
                         const GoldStandard* gold, LlmGateway& gateway, const RunOptions& options = {});

/// Deterministic run id: config digest plus corpus digest, no clock.
std::string make_run_id(const RunConfig& config, const Corpus& corpus, const std::string& scope = {});

/// Report file: `{run_id, config, metrics, evaluations, qa}`.
nlohmann::json run_report_to_json(const RunResult& r);

struct Comparison {
    RunResult a;
    RunResult b;
    std::vector<std::string> warnings;
};

/// Runs both configurations over the same corpus and questions. Each side
/// gets its own gateway built from its config and `prompts`.
Comparison run_comparison(const Corpus& corpus, const GoldStandard* gold, const RunConfig& a, const RunConfig& b,
                          const PromptLibrary& prompts);

/// `{a, b, deltas, warnings}`; deltas are a minus b, "n/a" when either side is.
nlohmann::json comparison_to_json(const Comparison& c);

/// Markdown rendering of a run report or comparison JSON.
std::string render_markdown(const nlohmann::json& report);

}  // namespace score
