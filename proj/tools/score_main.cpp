// score: command-line front end over a project directory.
//
// Exit codes: 0 ok, 1 usage, 2 validation/parse/io, 3 gateway or model reply,
// 4 replay cache miss.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

#include "score/error.hpp"
#include "score/file_io.hpp"
#include "score/project.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace score;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::contract: return 1;
        case ErrorKind::parse:
        case ErrorKind::validation:
        case ErrorKind::io: return 2;
        case ErrorKind::transport:
        case ErrorKind::model_reply: return 3;
        case ErrorKind::cache_miss: return 4;
    }
    return 1;
}

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string part; std::getline(ss, part, ',');)
        if (!part.empty()) out.push_back(part);
    return out;
}

EpisodeRef parse_episode_ref(const std::string& s) {
    const auto hash = s.rfind('#');
    if (hash == std::string::npos || hash == 0 || hash + 1 == s.size()) {
        throw UsageError("--episode expects STORY#INDEX, got '" + s + "'");
    }
    try {
        std::size_t used = 0;
        const auto n = std::stoul(s.substr(hash + 1), &used);
        if (used != s.size() - hash - 1) throw std::invalid_argument("trailing");
        return {s.substr(0, hash), static_cast<EpisodeIndex>(n)};
    } catch (const std::logic_error&) {
        throw UsageError("--episode index must be a number in '" + s + "'");
    }
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Narrative coherence engine: item-state tracking, retrieval and evaluation over story corpora"};
    app.require_subcommand(1);

    std::string project_dir = ".";
    std::string backend, base_url, model, cache_mode;
    std::optional<std::uint32_t> max_parallel;
    std::optional<std::size_t> top_n;
    std::optional<double> tau;
    app.add_option("-C,--project", project_dir, "Project root")->capture_default_str();
    app.add_option("--backend", backend, "mock or remote");
    app.add_option("--base-url", base_url, "Remote base URL (OpenAI-compatible)");
    app.add_option("--model", model, "Completion model name");
    app.add_option("--cache", cache_mode, "off, record or replay");
    app.add_option("--max-parallel", max_parallel, "Concurrent gateway requests");
    app.add_option("--top-n", top_n, "Episodes retrieved as context");
    app.add_option("--tau", tau, "Sentiment tolerance");

    auto* ingest = app.add_subcommand("ingest", "Validate story files and copy them into stories/");
    std::vector<std::string> ingest_files;
    ingest->add_option("files", ingest_files, "Story JSON files or corpus directories")->required();

    auto* summarize = app.add_subcommand("summarize", "Write per-episode summaries to summaries/");
    bool force = false;
    summarize->add_flag("--force", force, "Re-summarize unchanged stories");

    auto* track = app.add_subcommand("track", "Track key item states and write states/");

    auto* index = app.add_subcommand("index", "Build and save the retrieval index");
    std::string granularity = "summary";
    index->add_option("--granularity", granularity, "summary or chunk")->capture_default_str();

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate episodes and write a report to reports/");
    std::string episode_ref, ablate;
    evaluate->add_option("--episode", episode_ref, "Evaluate one episode, STORY#INDEX");
    evaluate->add_option("--ablate", ablate, "Comma list of modules to disable: tracking,summary,retrieval,sentiment");

    auto* ask = app.add_subcommand("ask", "Answer a question from retrieved context");
    std::string question, ask_story, ask_granularity = "summary";
    ask->add_option("question", question, "Question text")->required();
    ask->add_option("--story", ask_story, "Story to search (required when the project has several)");
    ask->add_option("--granularity", ask_granularity, "summary or chunk")->capture_default_str();

    auto* fuzz = app.add_subcommand("fuzz", "Generate a synthetic corpus with ground truth");
    FuzzSpec spec;
    fuzz->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
    fuzz->add_option("--stories", spec.n_stories, "Number of stories")->capture_default_str();
    fuzz->add_option("--rate", spec.violation_rate, "Comeback rate after loss or destruction")->capture_default_str();
    fuzz->add_option("--explained-rate", spec.explained_rate, "Share of comebacks with an explanation")
        ->capture_default_str();

    auto* compare = app.add_subcommand("compare", "Paired metrics: project config against a baseline or ablation");
    bool baseline = false;
    std::string compare_ablate;
    compare->add_flag("--baseline", baseline, "Compare against the model alone (all modules off)");
    compare->add_option("--ablate", compare_ablate, "Compare against the config with these modules off");

    auto* report = app.add_subcommand("report", "Print a stored report");
    std::string run_id;
    bool markdown = false;
    report->add_option("run-id", run_id, "Run id")->required();
    report->add_flag("--markdown", markdown, "Render as Markdown (also written next to the JSON)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        ProjectLock lock(project_dir);
        Project project(project_dir);

        json overrides = json::object();
        if (!backend.empty()) overrides["gateway"]["backend"] = backend;
        if (!base_url.empty()) overrides["gateway"]["base_url"] = base_url;
        if (!model.empty()) overrides["gateway"]["model_name"] = model;
        if (!cache_mode.empty()) overrides["gateway"]["cache_mode"] = cache_mode;
        if (max_parallel) overrides["gateway"]["max_parallel"] = *max_parallel;
        if (top_n) overrides["retrieval"]["top_n"] = *top_n;
        if (tau) overrides["retrieval"]["sentiment_tolerance"] = *tau;
        const RunConfig config = project.load_config(overrides);
        const auto gateway = [&](const RunConfig& c) { return std::make_unique<LlmGateway>(c.gateway, project.prompts()); };

        if (*ingest) {
            std::vector<fs::path> paths(ingest_files.begin(), ingest_files.end());
            print({{"ingested", project.ingest(paths)}});
        } else if (*summarize) {
            const auto corpus = project.load_stories();
            auto gw = gateway(config);
            const auto n = project.summarize(corpus, *gw, force);
            print({{"written", n.written}, {"unchanged", n.unchanged}});
        } else if (*track) {
            const auto corpus = project.load_stories();
            auto gw = gateway(config);
            Project::WriteCount n;
            const auto states = project.track(corpus, *gw, &n);
            std::size_t errors = 0;
            for (const auto& s : states) errors += s.errors.size();
            json out = {{"stories", states.size()}, {"continuity_errors", errors}, {"written", n.written},
                        {"unchanged", n.unchanged}};
            if (auto truth = project.load_ground_truth()) out["detection"] = detection_score_to_json(score_detection(states, *truth));
            print(out);
        } else if (*index) {
            const auto g = parse_granularity(granularity);
            if (!g) throw UsageError("--granularity must be summary or chunk");
            const auto corpus = project.load_stories();
            auto gw = gateway(config);
            print({{"granularity", granularity}, {"entries", project.build_index(corpus, config, *gw, *g)}});
        } else if (*evaluate) {
            RunConfig run = config;
            run.ablation.disable(split_list(ablate));
            RunOptions options;
            if (!episode_ref.empty()) options.only_episode = parse_episode_ref(episode_ref);
            const auto corpus = project.load_stories();
            auto gw = gateway(run);
            auto artifacts = project.load_artifacts(corpus);
            if (run.ablation.summary) {
                if (auto store = project.load_store(Granularity::summary)) {
                    artifacts.store = std::make_shared<RetrievalStore>(std::move(*store));
                }
            }
            artifacts = prepare_artifacts(corpus, run, *gw, std::move(artifacts));
            const auto gold = project.load_gold();
            const auto result = run_evaluation(corpus, artifacts, run, gold ? &*gold : nullptr, *gw, options);
            const auto path = project.report_path(result.run_id);
            write_if_changed(path, run_report_to_json(result).dump(2) + "\n");
            print({{"run_id", result.run_id},
                   {"report", path.string()},
                   {"disabled_modules", run.ablation.disabled()},
                   {"metrics", metric_values_to_json(result.metrics.overall)}});
        } else if (*ask) {
            const auto g = parse_granularity(ask_granularity);
            if (!g) throw UsageError("--granularity must be summary or chunk");
            auto store = project.load_store(*g);
            if (!store) throw ValidationError("index", "index not built");
            const auto corpus = project.load_stories();
            if (ask_story.empty()) {
                if (corpus.stories.size() != 1) throw UsageError("--story is required when the project holds several stories");
                ask_story = corpus.stories.front().story_id;
            }
            if (!corpus.find(ask_story)) throw ValidationError("story", "no story '" + ask_story + "'");
            auto gw = gateway(config);
            RetrievalScope scope{ask_story, std::nullopt, std::nullopt};
            const auto bundle =
                retrieve_for_query(question, store->index, store->docs, effective_retrieval(config), *gw, scope);
            print(qa_result_to_json(answer_query(ask_story, question, bundle, *gw)));
        } else if (*fuzz) {
            const auto generated = generate_corpus(spec);
            project.write_fuzz(generated);
            auto gw = gateway(config);
            std::vector<StoryStates> states;
            for (const auto& s : generated.corpus.stories) states.push_back(track_story(s, *gw));
            print({{"stories", generated.corpus.stories.size()},
                   {"planted_errors", generated.truth.planted_errors().size()},
                   {"spec", fuzz_spec_to_json(spec)},
                   {"detection", detection_score_to_json(score_detection(states, generated.truth))}});
        } else if (*compare) {
            if (baseline == !compare_ablate.empty()) throw UsageError("compare needs exactly one of --baseline or --ablate");
            RunConfig other = config;
            if (baseline) {
                other.ablation = Ablation::baseline();
            } else {
                other.ablation.disable(split_list(compare_ablate));
            }
            const auto corpus = project.load_stories();
            const auto gold = project.load_gold();
            const auto cmp = run_comparison(corpus, gold ? &*gold : nullptr, config, other, project.prompts());
            const auto j = comparison_to_json(cmp);
            const auto id = "compare-" + cmp.a.run_id + "-" + cmp.b.run_id;
            write_if_changed(project.report_path(id), j.dump(2) + "\n");
            for (const auto& w : cmp.warnings) std::cerr << "warning: " << w << "\n";
            print({{"run_id", id}, {"deltas", j["deltas"]}, {"warnings", cmp.warnings}});
        } else if (*report) {
            const auto j = project.load_report(run_id);
            if (markdown) {
                const auto md = render_markdown(j);
                write_if_changed(project.report_path(run_id, ".md"), md);
                std::cout << md;
            } else {
                print(j);
            }
        }
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "error (validation): " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error (io): " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
