#include "score/project.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "score/error.hpp"
#include "score/file_io.hpp"
#include "score/hash.hpp"

namespace score {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDirs[] = {"stories", "summaries", "states", "index", "cache", "reports", "prompts"};

/// Story ids become file names; anything outside [A-Za-z0-9._-] is replaced
/// and a short hash keeps the mapping injective.
std::string file_stem(const std::string& id) {
    std::string out;
    bool changed = id.empty() || id.front() == '.';
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                        c == '_' || c == '-';
        out += ok ? c : '_';
        changed = changed || !ok;
    }
    if (changed) out += "-" + sha256_hex(id).substr(0, 8);
    return out;
}

json parse_json_file(const fs::path& path) {
    const auto raw = read_file(path);
    try {
        return json::parse(raw);
    } catch (const json::parse_error& e) {
        throw ParseError(path.filename().string() + ": malformed JSON", e.byte);
    }
}

std::string story_digest(const Story& s) { return sha256_hex(serialize_story(s)); }

fs::path index_base(const Project& p, Granularity g) { return p.dir("index") / std::string(to_string(g)); }

fs::path docs_path(const Project& p, Granularity g) {
    return p.dir("index") / (std::string(to_string(g)) + ".docs.json");
}

}  // namespace

std::string_view to_string(Granularity g) { return g == Granularity::chunk ? "chunk" : "summary"; }

std::optional<Granularity> parse_granularity(std::string_view s) {
    if (s == "summary") return Granularity::summary;
    if (s == "chunk") return Granularity::chunk;
    return std::nullopt;
}

ProjectLock::ProjectLock(const fs::path& root) {
    fs::create_directories(root);
    const auto path = root / ".score.lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open lock file " + path.string() + ": " + std::strerror(errno));
    while (::flock(fd_, LOCK_EX) != 0) {
        if (errno != EINTR) {
            ::close(fd_);
            throw IoError("cannot lock " + path.string() + ": " + std::strerror(errno));
        }
    }
}

ProjectLock::~ProjectLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

Project::Project(fs::path root) : root_(std::move(root)) {
    for (const char* d : kDirs) fs::create_directories(root_ / d);
    PromptLibrary::builtin().write_missing(root_ / "prompts");
}

RunConfig Project::load_config(const json& overrides) const {
    RunConfig config;
    const auto path = root_ / "config.json";
    if (fs::exists(path)) config = run_config_from_json(parse_json_file(path), config);
    config = run_config_from_json(overrides, config);
    config.gateway.cache_dir = root_ / "cache";
    config.gateway.validate();
    config.retrieval.validate();
    return config;
}

PromptLibrary Project::prompts() const { return PromptLibrary::load(root_ / "prompts"); }

Corpus Project::load_stories() const {
    auto corpus = load_corpus(root_ / "stories");
    if (corpus.stories.empty()) throw ValidationError("stories", "no stories in project; run ingest or fuzz first");
    return corpus;
}

std::vector<std::string> Project::ingest(const std::vector<fs::path>& inputs) const {
    std::vector<Story> stories;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            auto c = load_corpus(in);
            for (auto& s : c.stories) stories.push_back(std::move(s));
        } else {
            try {
                stories.push_back(parse_story(read_file(in)));
            } catch (const ValidationError& e) {
                throw ValidationError(in.filename().string() + ":" + e.field(), e.detail());
            }
        }
    }
    // Validate the whole batch before writing anything.
    Corpus batch{stories};
    validate_corpus(batch);
    std::vector<std::string> ids;
    for (const auto& s : stories) {
        write_if_changed(root_ / "stories" / (file_stem(s.story_id) + ".json"), serialize_story(s) + "\n");
        ids.push_back(s.story_id);
    }
    return ids;
}

Project::WriteCount Project::summarize(const Corpus& corpus, LlmGateway& gateway, bool force) const {
    WriteCount count;
    for (const auto& story : corpus.stories) {
        const auto path = root_ / "summaries" / (file_stem(story.story_id) + ".json");
        const auto digest = story_digest(story);
        if (!force && fs::exists(path)) {
            const auto existing = parse_json_file(path);
            if (existing.value("story_digest", "") == digest) {
                ++count.unchanged;
                continue;
            }
        }
        auto j = summary_file_to_json(story.story_id, summarize_story(story, gateway));
        j["story_digest"] = digest;
        if (write_if_changed(path, j.dump(2) + "\n")) ++count.written;
        else ++count.unchanged;
    }
    return count;
}

std::vector<StoryStates> Project::track(const Corpus& corpus, LlmGateway& gateway, WriteCount* count) const {
    std::vector<StoryStates> out;
    for (const auto& story : corpus.stories) {
        auto states = track_story(story, gateway);
        const bool written = write_if_changed(root_ / "states" / (file_stem(story.story_id) + ".json"),
                                              story_states_to_json(states).dump(2) + "\n");
        if (count) ++(written ? count->written : count->unchanged);
        out.push_back(std::move(states));
    }
    return out;
}

std::size_t Project::build_index(const Corpus& corpus, const RunConfig& config, LlmGateway& gateway,
                                 Granularity granularity) const {
    std::optional<RetrievalStore> store;
    if (granularity == Granularity::summary) {
        const auto artifacts = load_artifacts(corpus);
        std::vector<EpisodeSummary> all;
        for (const auto& story : corpus.stories) {
            auto it = artifacts.summaries.find(story.story_id);
            if (it == artifacts.summaries.end()) {
                throw ValidationError("summaries", "no summaries for '" + story.story_id + "'; run summarize first");
            }
            all.insert(all.end(), it->second.begin(), it->second.end());
        }
        store.emplace(build_summary_store(all, gateway));
    } else {
        store.emplace(build_chunk_store(corpus, config.chunker, gateway));
    }
    store->index.save(index_base(*this, granularity));
    json docs = json::object();
    for (const auto& e : store->index.entries()) {
        const auto* d = store->docs.find(e.entry_id);
        docs[e.entry_id] = {{"text", d->text}, {"sentiment", d->sentiment.value}};
    }
    write_if_changed(docs_path(*this, granularity), docs.dump(2) + "\n");
    return store->index.size();
}

std::optional<RetrievalStore> Project::load_store(Granularity granularity) const {
    const auto base = index_base(*this, granularity);
    if (!fs::exists(fs::path(base.string() + ".vec")) || !fs::exists(docs_path(*this, granularity))) {
        return std::nullopt;
    }
    auto index = FlatIndex::load(base);
    RetrievalStore store(index.dimension());
    store.index = std::move(index);
    const auto docs = parse_json_file(docs_path(*this, granularity));
    try {
        for (const auto& e : store.index.entries()) {
            const auto& d = docs.at(e.entry_id);
            store.docs.put(e.entry_id, {d.at("text").get<std::string>(), SentimentScore::checked(d.at("sentiment").get<double>())});
        }
    } catch (const json::exception& e) {
        throw ValidationError("index.docs", std::string("document sidecar does not match the index: ") + e.what());
    }
    return store;
}

Artifacts Project::load_artifacts(const Corpus& corpus) const {
    Artifacts a;
    for (const auto& story : corpus.stories) {
        const auto stem = file_stem(story.story_id) + ".json";
        if (const auto p = root_ / "summaries" / stem; fs::exists(p)) {
            const auto j = parse_json_file(p);
            // Summaries of an older version of the story are ignored.
            if (j.value("story_digest", "") == story_digest(story)) a.summaries[story.story_id] = summary_file_from_json(j);
        }
        if (const auto p = root_ / "states" / stem; fs::exists(p)) {
            a.states[story.story_id] = story_states_from_json(parse_json_file(p));
        }
    }
    return a;
}

std::optional<GroundTruth> Project::load_ground_truth() const {
    const auto path = root_ / "ground_truth.json";
    if (!fs::exists(path)) return std::nullopt;
    return ground_truth_from_json(parse_json_file(path));
}

std::optional<GoldStandard> Project::load_gold() const {
    std::optional<GoldStandard> gold;
    if (auto truth = load_ground_truth()) gold = truth->gold();
    const auto path = root_ / "gold.json";
    if (fs::exists(path)) {
        auto extra = gold_from_json(parse_json_file(path));
        if (!gold) gold = GoldStandard{};
        gold->qa = std::move(extra.qa);
        if (!extra.item_states.empty()) gold->item_states = std::move(extra.item_states);
    }
    return gold;
}

void Project::write_fuzz(const FuzzCorpus& fuzz) const {
    for (const auto& s : fuzz.corpus.stories) {
        write_if_changed(root_ / "stories" / (file_stem(s.story_id) + ".json"), serialize_story(s) + "\n");
    }
    write_if_changed(root_ / "ground_truth.json", ground_truth_to_json(fuzz.truth).dump(2) + "\n");
}

fs::path Project::report_path(const std::string& run_id, std::string_view ext) const {
    return root_ / "reports" / (file_stem(run_id) + std::string(ext));
}

json Project::load_report(const std::string& run_id) const {
    const auto path = report_path(run_id);
    if (!fs::exists(path)) throw ValidationError("report", "no report for run '" + run_id + "'");
    return parse_json_file(path);
}

}  // namespace score
