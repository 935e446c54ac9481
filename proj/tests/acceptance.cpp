// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "retrieval_cases.hpp"
#include "score/evaluator.hpp"
#include "score/file_io.hpp"
#include "score/fuzz_harness.hpp"
#include "score/pipeline.hpp"
#include "support.hpp"

using namespace score;
using nlohmann::json;
using score::testing::TempDir;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

Verdict continuity_detection() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t tp = 0, fp = 0, fn = 0;
    bool exact = true;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        FuzzSpec spec;
        spec.seed = seed;
        spec.n_stories = 100;
        spec.violation_rate = 0.3;
        spec.explained_rate = 0.2;
        const auto fc = generate_corpus(spec);
        LlmGateway gw(score::testing::mock_config());
        std::vector<StoryStates> states;
        for (const auto& s : fc.corpus.stories) states.push_back(track_story(s, gw));
        const auto d = score_detection(states, fc.truth);
        exact = exact && d.precision == 1.0 && d.recall == 1.0;
        tp += d.true_positives;
        fp += d.false_positives;
        fn += d.false_negatives;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "seeds 1-10 x 100 stories: tp=" << tp << " fp=" << fp << " fn=" << fn << " in " << secs << " s";
    return {exact && tp > 0 && secs < 30.0, os.str()};
}

Verdict predicate_equivalence() {
    std::size_t checked = 0, mismatches = 0;
    for (std::size_t len = 0; len <= 6; ++len) {
        std::size_t combos = 1;
        for (std::size_t i = 0; i < len; ++i) combos *= 3;
        for (std::size_t code = 0; code < combos; ++code) {
            std::vector<ItemState> states;
            std::vector<EpisodeIndex> episodes;
            std::vector<bool> explained(len, false);
            ItemTimeline tl{"item", {}, {}};
            for (std::size_t k = 0, c = code; k < len; ++k, c /= 3) {
                states.push_back(static_cast<ItemState>(c % 3));
                episodes.push_back(static_cast<EpisodeIndex>(k));
                ItemObservation o;
                o.item_id = "item";
                o.episode_index = episodes.back();
                o.state = states.back();
                tl = record_observation(tl, o);
            }
            std::vector<std::tuple<EpisodeIndex, ItemState, EpisodeIndex>> got;
            for (const auto& e : detect_continuity_errors(tl))
                got.emplace_back(e.prior_episode, e.prior_state, e.reappearance_episode);
            ++checked;
            if (got != oracle::continuity_errors(episodes, states, explained)) ++mismatches;
        }
    }
    std::ostringstream os;
    os << checked << " sequences of length 0-6, " << mismatches << " mismatches";
    return {mismatches == 0 && checked == 1093, os.str()};
}

Verdict vector_oracle() {
    std::mt19937_64 rng(1000);
    const std::uint32_t dim = 32;
    FlatIndex index(dim);
    std::vector<std::pair<std::string, std::vector<double>>> raw;
    for (int i = 0; i < 1000; ++i) {
        auto v = score::testing::random_unit(rng, dim);
        raw.emplace_back("v" + std::to_string(i), v);
        index.add({raw.back().first, EntryKind::summary, "s", static_cast<EpisodeIndex>(i), v});
    }
    index.freeze();
    std::size_t query_mismatch = 0;
    for (int q = 0; q < 100; ++q) {
        const auto query = score::testing::random_unit(rng, dim);
        std::vector<std::string> got;
        for (const auto& h : index.search_top_n(query, 10)) got.push_back(h.entry_id);
        if (got != oracle::top_n(raw, query, 10)) ++query_mismatch;
    }
    std::size_t property_fail = 0;
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int i = 0; i < 10000; ++i) {
        const auto x = score::testing::random_unit(rng, dim);
        const auto y = score::testing::random_unit(rng, dim);
        const double c = cosine(x, y);
        auto ax = x;
        const double a = scale(rng);
        for (auto& v : ax) v *= a;
        const bool ok = std::abs(c - cosine(y, x)) <= 1e-12 && c >= -1.0 - 1e-9 && c <= 1.0 + 1e-9 &&
                        std::abs(cosine(ax, y) - c) <= 1e-9;
        if (!ok) ++property_fail;
    }
    std::ostringstream os;
    os << "100 queries over 1000 vectors: " << query_mismatch << " mismatches; 10000 cosine pairs: " << property_fail
       << " property failures";
    return {query_mismatch == 0 && property_fail == 0, os.str()};
}

Verdict sentiment_filter() {
    std::mt19937_64 rng(77);
    std::size_t unsound = 0, mismatched = 0, bypassed = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto c = score::testing::random_retrieval_case(rng, 1000);
        const auto check = score::testing::check_retrieval_case(c);
        if (!check.sound) ++unsound;
        if (!check.matches_oracle) ++mismatched;
        if (c.focus) {
            const auto b = select_context("f", c.query, c.focus, c.index, c.docs, c.config, c.scope);
            if (b.sentiment_filter_bypassed) ++bypassed;
        }
    }
    std::ostringstream os;
    os << "1000 randomized calls: " << unsound << " unsound, " << mismatched << " oracle mismatches, " << bypassed
       << " flagged bypasses";
    return {unsound == 0 && mismatched == 0, os.str()};
}

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

int run_cli(const TempDir& p, const std::string& args) {
    const std::string cmd = quote(SCORE_BIN) + " -C " + quote(p.path().string()) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict replay_reproducibility() {
    TempDir p;
    for (const char* step : {"fuzz --seed 7 --stories 10", "summarize", "track", "index", "--cache record evaluate"}) {
        if (run_cli(p, step) != 0) return {false, std::string("setup step failed: ") + step};
    }
    std::vector<std::string> reports;
    for (int i = 0; i < 2; ++i) {
        for (const auto& e : std::filesystem::directory_iterator(p / "reports")) std::filesystem::remove(e.path());
        if (run_cli(p, "--cache replay evaluate") != 0) return {false, "replay evaluate failed"};
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(p / "reports")) files.push_back(e.path());
        if (files.size() != 1) return {false, "expected one report per run"};
        reports.push_back(read_file(files[0]));
    }
    return {reports[0] == reports[1] && !reports[0].empty(),
            "two replay evaluate runs, " + std::to_string(reports[0].size()) + " bytes each, " +
                (reports[0] == reports[1] ? "identical" : "different")};
}

Verdict round_trips() {
    FuzzSpec spec;
    spec.seed = 11;
    spec.n_stories = 25;
    const auto fc = generate_corpus(spec);
    std::size_t story_fail = 0;
    for (const auto& s : fc.corpus.stories) {
        if (!(parse_story(serialize_story(s)) == s)) ++story_fail;
    }
    TempDir dir;
    std::mt19937_64 rng(5);
    FlatIndex index(48);
    for (int i = 0; i < 300; ++i) {
        index.add({"e" + std::to_string(i), i % 2 ? EntryKind::chunk : EntryKind::summary, "s" + std::to_string(i % 7),
                   static_cast<EpisodeIndex>(i), score::testing::random_unit(rng, 48)});
    }
    index.freeze();
    index.save(dir / "idx");
    const auto loaded = FlatIndex::load(dir / "idx");
    std::size_t search_fail = 0;
    for (int q = 0; q < 50; ++q) {
        const auto query = score::testing::random_unit(rng, 48);
        if (loaded.search_top_n(query, 20) != index.search_top_n(query, 20)) ++search_fail;
    }
    std::ostringstream os;
    os << fc.corpus.stories.size() << " stories (" << story_fail << " failures); index of 300 "
       << (loaded == index ? "equal" : "different") << " after load, " << search_fail << " search differences";
    return {story_fail == 0 && loaded == index && search_fail == 0, os.str()};
}

Verdict ablation_direction() {
    const auto fixture = json::parse(read_file(score::testing::fixture("qa_gold.json")));
    FuzzSpec spec;
    spec.seed = fixture.at("corpus").at("seed").get<std::uint64_t>();
    spec.n_stories = fixture.at("corpus").at("stories").get<std::size_t>();
    const auto fc = generate_corpus(spec);
    auto gold = fc.truth.gold();
    gold.qa.clear();
    for (const auto& q : fixture.at("qa")) {
        gold.qa.push_back({q.at("story_id").get<std::string>(), q.at("question").get<std::string>(),
                           q.at("answer").get<std::string>()});
    }
    const auto metrics = [&](const std::vector<std::string>& off) {
        RunConfig rc;
        rc.ablation.disable(off);
        LlmGateway gw(rc.gateway);
        const auto artifacts = prepare_artifacts(fc.corpus, rc, gw);
        return run_evaluation(fc.corpus, artifacts, rc, &gold, gw).metrics.overall;
    };
    const auto full = metrics({});
    const auto no_tracking = metrics({"tracking"});
    const auto no_retrieval = metrics({"retrieval"});
    const bool ok = full.item_status && no_tracking.item_status && full.complex_qa && no_retrieval.complex_qa &&
                    *no_tracking.item_status < *full.item_status && *no_retrieval.complex_qa < *full.complex_qa;
    std::ostringstream os;
    os << "item_status " << full.item_status.value_or(-1) << " -> " << no_tracking.item_status.value_or(-1)
       << " without tracking; complex_qa " << full.complex_qa.value_or(-1) << " -> "
       << no_retrieval.complex_qa.value_or(-1) << " without retrieval (" << gold.qa.size() << " questions)";
    return {ok && gold.qa.size() == 20, os.str()};
}

Verdict metric_arithmetic() {
    std::vector<EpisodeEvaluation> evals(3);
    const double facets[] = {1.0, 3.0, 5.0};
    for (int i = 0; i < 3; ++i) {
        evals[i].episode = {"s", static_cast<EpisodeIndex>(i)};
        evals[i].facet_scores = {facets[i], facets[i], facets[i], facets[i]};
    }
    std::vector<QAResult> qa(4);
    for (int i = 0; i < 4; ++i) {
        qa[i].story_id = "s";
        qa[i].question = "q";
        qa[i].gold_answer = "episode 1";
        qa[i].correct = i < 2;
    }
    MetricsInputs in;
    in.evaluations = &evals;
    in.qa = &qa;
    const auto m = compute_metrics(in).overall;
    const bool ok = m.coherence && *m.coherence == 50.0 && m.complex_qa && *m.complex_qa == 50.0;
    std::ostringstream os;
    os << "coherence " << m.coherence.value_or(-1) << ", complex_qa " << m.complex_qa.value_or(-1);
    return {ok, os.str()};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"continuity detection on fuzz corpora", continuity_detection},
        {"predicate equivalence over all state sequences", predicate_equivalence},
        {"vector search oracle and cosine properties", vector_oracle},
        {"sentiment filter soundness", sentiment_filter},
        {"replay reproducibility", replay_reproducibility},
        {"story and index round-trips", round_trips},
        {"ablation direction", ablation_direction},
        {"metric arithmetic", metric_arithmetic},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failures += v.pass ? 0 : 1;
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
