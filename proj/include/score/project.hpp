#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "score/fuzz_harness.hpp"
#include "score/pipeline.hpp"

namespace score {

enum class Granularity { summary, chunk };

std::string_view to_string(Granularity g);
std::optional<Granularity> parse_granularity(std::string_view s);

/// Exclusive advisory lock on `<root>/.score.lock`, held for the lifetime of
/// the object. Blocks while another process holds it.
class ProjectLock {
public:
    explicit ProjectLock(const std::filesystem::path& root);
    ~ProjectLock();
    ProjectLock(const ProjectLock&) = delete;
    ProjectLock& operator=(const ProjectLock&) = delete;

private:
    int fd_ = -1;
};

/// Project directory convention:
///   config.json  stories/  summaries/  states/  index/  cache/  reports/  prompts/
/// plus optional ground_truth.json (from `fuzz`) and gold.json (questions).
/// Every path the project writes lies under the root.
class Project {
public:
    /// Creates missing directories and prompt templates.
    explicit Project(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path dir(std::string_view name) const { return root_ / name; }

    /// config.json overlaid with `overrides` (same schema). The cache always
    /// lives in `<root>/cache`.
    RunConfig load_config(const nlohmann::json& overrides = nlohmann::json::object()) const;
    PromptLibrary prompts() const;

    /// Throws ValidationError when stories/ is empty.
    Corpus load_stories() const;

    /// Validates and copies story files (or every story of a corpus
    /// directory) into stories/. Returns the ids ingested.
    std::vector<std::string> ingest(const std::vector<std::filesystem::path>& inputs) const;

    struct WriteCount {
        std::size_t written = 0;
        std::size_t unchanged = 0;
    };

    /// Summaries are kept while the story they came from is unchanged,
    /// unless `force`.
    WriteCount summarize(const Corpus& corpus, LlmGateway& gateway, bool force) const;
    std::vector<StoryStates> track(const Corpus& corpus, LlmGateway& gateway, WriteCount* count = nullptr) const;
    /// Builds, freezes and saves `index/<granularity>.*`. Summary granularity
    /// needs summaries on disk.
    std::size_t build_index(const Corpus& corpus, const RunConfig& config, LlmGateway& gateway,
                            Granularity granularity) const;

    /// Nullopt when the index has not been built.
    std::optional<RetrievalStore> load_store(Granularity granularity) const;
    /// Summaries, states and index from disk, where present.
    Artifacts load_artifacts(const Corpus& corpus) const;

    std::optional<GroundTruth> load_ground_truth() const;
    /// Item states from ground_truth.json; questions from gold.json when it
    /// exists, else from ground_truth.json.
    std::optional<GoldStandard> load_gold() const;

    /// Writes the fuzz corpus into stories/ and ground_truth.json.
    void write_fuzz(const FuzzCorpus& fuzz) const;

    std::filesystem::path report_path(const std::string& run_id, std::string_view ext = ".json") const;
    /// Throws ValidationError("report") when the run does not exist.
    nlohmann::json load_report(const std::string& run_id) const;

private:
    std::filesystem::path root_;
};

}  // namespace score
