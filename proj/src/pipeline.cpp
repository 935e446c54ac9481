#include "score/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "score/error.hpp"
#include "score/hash.hpp"
#include "score/parallel.hpp"

namespace score {

using nlohmann::json;

namespace {

constexpr const char* kModules[] = {"tracking", "summary", "retrieval", "sentiment"};

bool* module_flag(Ablation& a, std::string_view name) {
    if (name == "tracking") return &a.tracking;
    if (name == "summary") return &a.summary;
    if (name == "retrieval") return &a.retrieval;
    if (name == "sentiment") return &a.sentiment;
    return nullptr;
}

/// Embeds documents in batches no larger than the gateway allows.
void embed_into(RetrievalStore& store, std::vector<IndexEntry> entries, std::vector<StoredDocument> docs,
                LlmGateway& gateway) {
    const std::size_t batch = std::max<std::uint32_t>(1, gateway.config().embed_batch_limit);
    const std::size_t n_batches = (entries.size() + batch - 1) / batch;
    std::vector<std::vector<Embedding>> vectors(n_batches);
    parallel_for(n_batches, gateway.config().max_parallel, [&](std::size_t b) {
        std::vector<std::string> texts;
        for (std::size_t i = b * batch; i < std::min(entries.size(), (b + 1) * batch); ++i) texts.push_back(docs[i].text);
        vectors[b] = gateway.embed(texts);
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        entries[i].embedding = std::move(vectors[i / batch][i % batch]);
        store.docs.put(entries[i].entry_id, std::move(docs[i]));
        store.index.add(std::move(entries[i]));
    }
    store.index.freeze();
}

/// The `top_n` episodes right before `before`, most recent first.
ContextBundle recency_context(std::string focus, const Story& story, EpisodeIndex before, const RetrievalStore& store,
                              const RetrievalConfig& config) {
    ContextBundle bundle;
    bundle.focus = std::move(focus);
    std::size_t used = 0;
    for (EpisodeIndex t = before; t > 0 && bundle.selected.size() < config.top_n;) {
        --t;
        const auto id = document_id(story.story_id, t);
        const auto* doc = store.docs.find(id);
        if (!doc) throw ValidationError("index", "no stored document for " + id);
        if (used + doc->text.size() > config.context_char_budget) {
            bundle.truncated = true;
            break;
        }
        used += doc->text.size();
        bundle.selected.push_back({id, story.story_id, t, 0.0, doc->sentiment, doc->text});
    }
    return bundle;
}

const std::vector<EpisodeSummary>& summaries_for(const Artifacts& a, const Story& story) {
    auto it = a.summaries.find(story.story_id);
    if (it == a.summaries.end() || it->second.size() != story.episodes.size()) {
        throw ValidationError("summaries", "missing or incomplete summaries for story '" + story.story_id + "'");
    }
    return it->second;
}

const StoryStates& states_for(const Artifacts& a, const Story& story) {
    auto it = a.states.find(story.story_id);
    if (it == a.states.end()) throw ValidationError("states", "no item states for story '" + story.story_id + "'");
    return it->second;
}

json opt_delta(const std::optional<double>& a, const std::optional<double>& b) {
    return a && b ? json(*a - *b) : json("n/a");
}

std::string fmt_metric(const json& v) {
    if (!v.is_number()) return v.is_string() ? v.get<std::string>() : "n/a";
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << v.get<double>();
    return os.str();
}

}  // namespace

std::vector<std::string> Ablation::disabled() const {
    std::vector<std::string> out;
    Ablation copy = *this;
    for (const char* m : kModules)
        if (!*module_flag(copy, m)) out.emplace_back(m);
    return out;
}

void Ablation::disable(const std::vector<std::string>& names) {
    for (const auto& n : names) {
        bool* flag = module_flag(*this, n);
        if (!flag) throw ValidationError("ablate", "unknown module '" + n + "' (tracking, summary, retrieval, sentiment)");
        *flag = false;
    }
}

RetrievalConfig effective_retrieval(const RunConfig& c) {
    RetrievalConfig r = c.retrieval;
    r.sentiment_filter = r.sentiment_filter && c.ablation.sentiment;
    return r;
}

json run_config_to_json(const RunConfig& c) {
    auto gateway = gateway_config_to_json(c.gateway);
    // Replay and record runs must report identically.
    gateway.erase("cache_mode");
    return {{"gateway", std::move(gateway)},
            {"retrieval", retrieval_config_to_json(effective_retrieval(c))},
            {"chunker", {{"max_chars", c.chunker.max_chars}, {"overlap_chars", c.chunker.overlap_chars}}},
            {"ablate", c.ablation.disabled()}};
}

RunConfig run_config_from_json(const json& j, RunConfig base) {
    if (!j.is_object()) throw ValidationError("config", "must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "gateway") {
            base.gateway = gateway_config_from_json(value, base.gateway);
        } else if (key == "retrieval") {
            base.retrieval = retrieval_config_from_json(value, base.retrieval);
        } else if (key == "chunker") {
            try {
                for (const auto& [k, v] : value.items()) {
                    if (k == "max_chars") base.chunker.max_chars = v.get<std::size_t>();
                    else if (k == "overlap_chars") base.chunker.overlap_chars = v.get<std::size_t>();
                    else throw ValidationError("chunker." + k, "unknown key");
                }
            } catch (const json::exception& e) {
                throw ValidationError("chunker", std::string("wrong value type: ") + e.what());
            }
            if (base.chunker.max_chars == 0 || base.chunker.overlap_chars >= base.chunker.max_chars) {
                throw ValidationError("chunker", "need 0 <= overlap_chars < max_chars");
            }
        } else if (key == "ablate") {
            if (!value.is_array()) throw ValidationError("ablate", "must be a list of module names");
            base.ablation.disable(value.get<std::vector<std::string>>());
        } else {
            throw ValidationError(key, "unknown key");
        }
    }
    return base;
}

std::string config_digest(const RunConfig& c) { return sha256_hex(run_config_to_json(c).dump()); }

RetrievalStore build_summary_store(const std::vector<EpisodeSummary>& summaries, LlmGateway& gateway) {
    RetrievalStore store(gateway.config().embed_dim);
    std::vector<IndexEntry> entries;
    std::vector<StoredDocument> docs;
    for (const auto& s : summaries) {
        auto doc = build_retrieval_document(s);
        entries.push_back({doc.doc_id, EntryKind::summary, s.story_id, s.episode_index, {}});
        docs.push_back({std::move(doc.text), s.sentiment});
    }
    embed_into(store, std::move(entries), std::move(docs), gateway);
    return store;
}

RetrievalStore build_episode_store(const Corpus& corpus, LlmGateway& gateway) {
    RetrievalStore store(gateway.config().embed_dim);
    std::vector<IndexEntry> entries;
    std::vector<const Episode*> episodes;
    for (const auto& story : corpus.stories) {
        for (const auto& e : story.episodes) {
            entries.push_back({document_id(story.story_id, e.index), EntryKind::chunk, story.story_id, e.index, {}});
            episodes.push_back(&e);
        }
    }
    std::vector<StoredDocument> docs(episodes.size());
    parallel_for(episodes.size(), gateway.config().max_parallel, [&](std::size_t i) {
        docs[i] = {episodes[i]->text, gateway.score_sentiment(episodes[i]->text)};
    });
    embed_into(store, std::move(entries), std::move(docs), gateway);
    return store;
}

RetrievalStore build_chunk_store(const Corpus& corpus, const ChunkerConfig& chunker, LlmGateway& gateway) {
    RetrievalStore store(gateway.config().embed_dim);
    std::vector<IndexEntry> entries;
    std::vector<StoredDocument> docs;
    for (const auto& story : corpus.stories) {
        for (const auto& e : story.episodes) {
            const auto sentiment = gateway.score_sentiment(e.text);
            for (auto& c : segment(story.story_id, e, chunker)) {
                entries.push_back({document_id(story.story_id, e.index) + "/" + std::to_string(c.seq), EntryKind::chunk,
                                   story.story_id, e.index, {}});
                docs.push_back({std::move(c.text), sentiment});
            }
        }
    }
    embed_into(store, std::move(entries), std::move(docs), gateway);
    return store;
}

std::vector<ItemObservation> report_item_states(const Episode& episode, const std::vector<KeyItem>& items,
                                                LlmGateway& gateway) {
    return extract_item_statuses(episode, items, gateway, "report_item_states");
}

Artifacts prepare_artifacts(const Corpus& corpus, const RunConfig& config, LlmGateway& gateway, Artifacts existing) {
    for (const auto& story : corpus.stories) {
        if (config.ablation.summary && !existing.summaries.count(story.story_id)) {
            existing.summaries[story.story_id] = summarize_story(story, gateway);
        }
        if (config.ablation.tracking && !existing.states.count(story.story_id)) {
            existing.states[story.story_id] = track_story(story, gateway);
        }
    }
    if (!existing.store) {
        if (config.ablation.summary) {
            std::vector<EpisodeSummary> all;
            for (const auto& story : corpus.stories) {
                const auto& s = summaries_for(existing, story);
                all.insert(all.end(), s.begin(), s.end());
            }
            existing.store = std::make_shared<RetrievalStore>(build_summary_store(all, gateway));
        } else {
            existing.store = std::make_shared<RetrievalStore>(build_episode_store(corpus, gateway));
        }
    }
    return existing;
}

std::string make_run_id(const RunConfig& config, const Corpus& corpus, const std::string& scope) {
    std::string material = config_digest(config) + "\n" + scope + "\n";
    for (const auto& s : corpus.stories) material += sha256_hex(serialize_story(s)) + "\n";
    return sha256_hex(material).substr(0, 16);
}

RunResult run_evaluation(const Corpus& corpus, const Artifacts& artifacts, const RunConfig& config,
                         const GoldStandard* gold, LlmGateway& gateway, const RunOptions& options) {
    if (!artifacts.store) throw ContractError("run_evaluation needs a retrieval store");
    const auto& store = *artifacts.store;
    const auto retrieval = effective_retrieval(config);
    const auto& ablation = config.ablation;

    struct Task {
        const Story* story;
        const Episode* episode;
    };
    std::vector<Task> tasks;
    for (const auto& story : corpus.stories) {
        for (const auto& e : story.episodes) {
            if (options.only_episode &&
                (options.only_episode->story_id != story.story_id || options.only_episode->episode_index != e.index)) {
                continue;
            }
            tasks.push_back({&story, &e});
        }
    }
    if (options.only_episode && tasks.empty()) {
        throw ValidationError("episode", "no episode " + options.only_episode->story_id + "#" +
                                             std::to_string(options.only_episode->episode_index));
    }

    // Without tracking, the model's own per-episode reading stands in for the timeline.
    std::vector<std::vector<ItemObservation>> raw(tasks.size());
    if (!ablation.tracking) {
        parallel_for(tasks.size(), gateway.config().max_parallel, [&](std::size_t i) {
            raw[i] = report_item_states(*tasks[i].episode, tasks[i].story->key_items, gateway);
        });
    }

    RunResult result;
    result.config = config;
    result.evaluations.resize(tasks.size());
    parallel_for(tasks.size(), gateway.config().max_parallel, [&](std::size_t i) {
        const auto& story = *tasks[i].story;
        const auto& episode = *tasks[i].episode;
        EvaluationInputs inputs;
        std::string focus = episode.text;
        if (ablation.summary) {
            inputs.summary = &summaries_for(artifacts, story)[episode.index];
            focus = build_retrieval_document(*inputs.summary).text;
            inputs.focus_sentiment = inputs.summary->sentiment;
        } else {
            inputs.focus_sentiment = gateway.score_sentiment(episode.text);
        }
        if (ablation.tracking) {
            const auto& states = states_for(artifacts, story);
            for (const auto& e : states.errors)
                if (e.reappearance_episode == episode.index) inputs.errors.push_back(e);
            for (const auto& t : states.corrected)
                if (auto s = t.state_at(episode.index)) inputs.item_states.push_back({t.item_id, *s, episode.index});
        } else {
            for (const auto& obs : raw[i]) inputs.item_states.push_back({obs.item_id, obs.state, episode.index});
        }

        ContextBundle context;
        if (ablation.retrieval) {
            RetrievalScope scope{story.story_id, std::nullopt, episode.index};
            if (retrieval.exclude_self) scope.exclude_episode = episode.index;
            context = retrieve_related(focus, inputs.focus_sentiment, store.index, store.docs, retrieval, gateway, scope);
        } else {
            context = recency_context(focus, story, episode.index, store, retrieval);
        }
        result.evaluations[i] = evaluate_episode(story, episode, inputs, context, gateway);
    });

    // Item-state reports: the tracker's corrected view, or the raw readings.
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& story = *tasks[i].story;
        const auto t = tasks[i].episode->index;
        if (ablation.tracking) {
            for (const auto& tl : states_for(artifacts, story).corrected)
                if (auto s = tl.state_at(t)) result.item_reports.push_back({story.story_id, tl.item_id, t, *s});
        } else {
            for (const auto& obs : raw[i]) result.item_reports.push_back({story.story_id, obs.item_id, t, obs.state});
        }
    }

    if (options.run_qa && !options.only_episode && gold) {
        std::vector<const GoldQA*> questions;
        for (const auto& q : gold->qa)
            if (corpus.find(q.story_id)) questions.push_back(&q);
        result.qa.resize(questions.size());
        parallel_for(questions.size(), gateway.config().max_parallel, [&](std::size_t i) {
            const auto& q = *questions[i];
            const auto& story = *corpus.find(q.story_id);
            ContextBundle context;
            if (ablation.retrieval) {
                context = retrieve_for_query(q.question, store.index, store.docs, retrieval, gateway,
                                             RetrievalScope{story.story_id, std::nullopt, std::nullopt});
            } else {
                context = recency_context(q.question, story, static_cast<EpisodeIndex>(story.episodes.size()), store,
                                          retrieval);
            }
            result.qa[i] = answer_query(q.story_id, q.question, context, gateway, q.answer);
        });
    }

    std::vector<StoryStates> timelines;
    for (const auto& story : corpus.stories)
        if (auto it = artifacts.states.find(story.story_id); it != artifacts.states.end()) timelines.push_back(it->second);

    MetricsInputs in;
    in.evaluations = &result.evaluations;
    in.qa = &result.qa;
    in.item_reports = &result.item_reports;
    in.timelines = &timelines;
    in.gold = gold;
    in.corpus = &corpus;
    result.metrics = compute_metrics(in, config_digest(config));

    std::string scope;
    if (options.only_episode) scope = document_id(options.only_episode->story_id, options.only_episode->episode_index);
    result.run_id = make_run_id(config, corpus, scope);
    return result;
}

json run_report_to_json(const RunResult& r) {
    json evaluations = json::array();
    for (const auto& e : r.evaluations) evaluations.push_back(evaluation_to_json(e));
    json qa = json::array();
    for (const auto& q : r.qa) qa.push_back(qa_result_to_json(q));
    return {{"run_id", r.run_id},
            {"config", run_config_to_json(r.config)},
            {"disabled_modules", r.config.ablation.disabled()},
            {"item_status_source", r.config.ablation.tracking ? "tracker" : "model"},
            {"metrics", metrics_report_to_json(r.metrics)},
            {"evaluations", std::move(evaluations)},
            {"qa", std::move(qa)}};
}

Comparison run_comparison(const Corpus& corpus, const GoldStandard* gold, const RunConfig& a, const RunConfig& b,
                          const PromptLibrary& prompts) {
    Comparison out;
    if (config_digest(a) == config_digest(b)) {
        out.warnings.push_back("both sides share config digest " + config_digest(a));
    }
    const auto run = [&](const RunConfig& c) {
        LlmGateway gateway(c.gateway, prompts);
        const auto artifacts = prepare_artifacts(corpus, c, gateway);
        return run_evaluation(corpus, artifacts, c, gold, gateway);
    };
    out.a = run(a);
    out.b = run(b);
    return out;
}

json comparison_to_json(const Comparison& c) {
    const auto& ma = c.a.metrics.overall;
    const auto& mb = c.b.metrics.overall;
    return {{"a", run_report_to_json(c.a)},
            {"b", run_report_to_json(c.b)},
            {"deltas",
             {{"consistency", opt_delta(ma.consistency, mb.consistency)},
              {"coherence", opt_delta(ma.coherence, mb.coherence)},
              {"item_status", opt_delta(ma.item_status, mb.item_status)},
              {"complex_qa", opt_delta(ma.complex_qa, mb.complex_qa)}}},
            {"warnings", c.warnings}};
}

std::string render_markdown(const json& report) {
    static const char* kMetrics[] = {"consistency", "coherence", "item_status", "complex_qa"};
    std::ostringstream md;
    if (report.contains("deltas")) {
        md << "# Comparison\n\n";
        md << "| metric | a (" << report["a"].value("run_id", "") << ") | b (" << report["b"].value("run_id", "")
           << ") | delta |\n|---|---|---|---|\n";
        for (const char* m : kMetrics) {
            md << "| " << m << " | " << fmt_metric(report["a"]["metrics"][m]) << " | "
               << fmt_metric(report["b"]["metrics"][m]) << " | " << fmt_metric(report["deltas"][m]) << " |\n";
        }
        md << "\nDisabled modules: a = " << report["a"]["disabled_modules"].dump()
           << ", b = " << report["b"]["disabled_modules"].dump() << "\n";
        for (const auto& w : report.value("warnings", json::array())) md << "\nWarning: " << w.get<std::string>() << "\n";
        return md.str();
    }

    md << "# Run " << report.value("run_id", "") << "\n\n";
    md << "Disabled modules: " << report.value("disabled_modules", json::array()).dump() << "  \n";
    md << "Item status source: " << report.value("item_status_source", "") << "  \n";
    md << "Coherence scale: " << report["metrics"].value("coherence_scale", "") << "\n\n";
    md << "| metric | value |\n|---|---|\n";
    for (const char* m : kMetrics) md << "| " << m << " | " << fmt_metric(report["metrics"][m]) << " |\n";

    md << "\n## Episodes\n\n| episode | character | plot | emotion | key items | errors cited |\n|---|---|---|---|---|---|\n";
    for (const auto& e : report.value("evaluations", json::array())) {
        const auto& f = e["facet_scores"];
        md << "| " << e["story_id"].get<std::string>() << "#" << e["episode_index"].get<EpisodeIndex>() << " | "
           << f["character_consistency"].get<double>() << " | " << f["plot_progression"].get<double>() << " | "
           << f["emotional_authenticity"].get<double>() << " | " << f["key_item_continuity"].get<double>() << " | "
           << e["continuity_errors_cited"].size() << " |\n";
    }
    const auto qa = report.value("qa", json::array());
    if (!qa.empty()) {
        md << "\n## Questions\n\n| story | question | answer | correct |\n|---|---|---|---|\n";
        for (const auto& q : qa) {
            md << "| " << q["story_id"].get<std::string>() << " | " << q["question"].get<std::string>() << " | "
               << q["answer"].get<std::string>() << " | "
               << (q["correct"].is_boolean() ? (q["correct"].get<bool>() ? "yes" : "no") : "-") << " |\n";
        }
    }
    return md.str();
}

}  // namespace score
