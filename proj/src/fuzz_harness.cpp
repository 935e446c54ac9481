#include "score/fuzz_harness.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <optional>
#include <random>
#include <set>
#include <tuple>

#include "score/error.hpp"

namespace score {

using nlohmann::json;

namespace {

// std distributions differ between standard libraries; these do not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    bool chance(double p) { return uniform() < p; }

    /// Uniform in [lo, hi].
    std::size_t between(std::size_t lo, std::size_t hi) {
        const std::uint64_t span = hi - lo + 1;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x;
        do x = engine_(); while (x >= limit);
        return lo + static_cast<std::size_t>(x % span);
    }

    template <typename T, std::size_t N>
    const T& pick(const std::array<T, N>& pool) { return pool[between(0, N - 1)]; }

private:
    std::mt19937_64 engine_;
};

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// None of these words occur in the state lexicon, and no name, place or
// filler word is an item alias.
constexpr std::array<const char*, 14> kNames = {"Mira", "Tomas", "Elena", "Corin", "Basil", "Ines", "Dara",
                                                "Felix", "Nadia", "Orrin", "Priya", "Soren", "Wren", "Lucan"};
constexpr std::array<const char*, 16> kItems = {"lantern", "sword", "compass", "amulet", "map", "ring",
                                                "locket", "dagger", "crown", "journal", "violin", "telescope",
                                                "pendant", "chalice", "banner", "flute"};
constexpr std::array<const char*, 10> kPlaces = {"harbor", "tower", "forest", "village", "market",
                                                 "valley", "garden", "bridge", "cellar", "library"};

constexpr std::array<const char*, 5> kActive = {
    "{c} carried the {i} across the {p}.", "{c} polished the {i} by the fire.",
    "{c} showed the {i} to the others in the {p}.", "The {i} rested on a table in the {p}.",
    "{c} held the {i} up to the light."};
constexpr std::array<const char*, 4> kDestroyed = {
    "The {i} shattered against the {p} wall.", "{c} smashed the {i} on the rocks.",
    "The {i} burned in the {p} fire.", "The {i} crumbled to dust in the {p}."};
constexpr std::array<const char*, 4> kLost = {
    "{c} lost the {i} somewhere in the {p}.", "The {i} vanished from the {p} overnight.",
    "The {i} was stolen from the {p}.", "The {i} disappeared without a trace."};
constexpr std::array<const char*, 4> kExplain = {
    "{c} repaired the {i} with great care.", "{c} recovered the {i} from the {p}.",
    "The {i} was restored by a smith in the {p}.", "{c} rebuilt the {i} piece by piece."};
constexpr std::array<const char*, 12> kFiller = {
    "{c} walked along the {p} road.", "Rain fell over the {p}.", "{c} spoke quietly with {d}.",
    "{c} laughed at an old joke.", "{c} felt worried about the journey.", "The wind grew cold near the {p}.",
    "{c} smiled at {d}.", "Bells rang out from the {p}.", "{c} waited for news from the {p}.",
    "{d} cooked a simple meal.", "{c} and {d} argued about the road ahead.", "A calm evening settled on the {p}."};

std::string fill(const char* tmpl, const std::string& c, const std::string& d, const std::string& item, Rng& rng) {
    std::string out = tmpl;
    const auto replace = [&](std::string_view key, const std::string& value) {
        for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
            out.replace(pos, key.size(), value);
        }
    };
    replace("{c}", c);
    replace("{d}", d);
    replace("{i}", item);
    replace("{p}", rng.pick(kPlaces));
    return out;
}

struct ItemPlan {
    std::string item;
    std::size_t first = 0;
    std::optional<std::size_t> terminal;
    ItemState terminal_state = ItemState::destroyed;
    std::optional<std::size_t> comeback;
    bool explained = false;
};

std::pair<Story, StoryTruth> generate_story(const FuzzSpec& spec, std::size_t index) {
    Rng rng(mix(spec.seed ^ mix(index)));
    const auto n_episodes = rng.between(spec.episodes_min, spec.episodes_max);
    const auto n_items = rng.between(spec.items_min, spec.items_max);

    std::vector<std::string> cast;
    while (cast.size() < 3) {
        std::string name = rng.pick(kNames);
        if (std::find(cast.begin(), cast.end(), name) == cast.end()) cast.push_back(name);
    }

    std::vector<ItemPlan> plans;
    while (plans.size() < n_items) {
        std::string item = rng.pick(kItems);
        if (std::any_of(plans.begin(), plans.end(), [&](const ItemPlan& p) { return p.item == item; })) continue;
        ItemPlan plan;
        plan.item = item;
        plan.first = rng.between(0, n_episodes / 3);
        // Room for a terminal event and a later comeback.
        if (plan.first + 2 < n_episodes && rng.chance(0.7)) {
            plan.terminal = rng.between(plan.first + 1, n_episodes - 2);
            plan.terminal_state = rng.chance(0.5) ? ItemState::destroyed : ItemState::lost;
            if (rng.chance(spec.violation_rate)) {
                plan.comeback = rng.between(*plan.terminal + 1, n_episodes - 1);
                plan.explained = rng.chance(spec.explained_rate);
            }
        }
        plans.push_back(std::move(plan));
    }

    Story story;
    char id[64];
    std::snprintf(id, sizeof id, "fuzz-%llu-%03zu", static_cast<unsigned long long>(spec.seed), index);
    story.story_id = id;
    story.title = "Synthetic story " + std::to_string(index);
    story.genre = static_cast<Genre>(index % 4);
    for (const auto& p : plans) story.key_items.push_back({p.item, {p.item}});

    StoryTruth truth;
    truth.story_id = story.story_id;
    std::vector<TrueTimeline> timelines(plans.size());

    for (std::size_t t = 0; t < n_episodes; ++t) {
        const auto person = [&] { return cast[rng.between(0, cast.size() - 1)]; };
        std::vector<std::string> sentences;
        const auto n_fillers = rng.between(3, 6);
        for (std::size_t f = 0; f < n_fillers; ++f) {
            auto c = person();
            auto d = person();
            while (d == c) d = person();
            sentences.push_back(fill(rng.pick(kFiller), c, d, "", rng));
        }

        for (std::size_t k = 0; k < plans.size(); ++k) {
            const auto& p = plans[k];
            std::vector<std::string> events;
            if (t < p.first) continue;
            ItemState state = ItemState::active;
            const bool before_terminal = !p.terminal || t < *p.terminal;
            if (t == p.first) {
                events.push_back(fill(rng.pick(kActive), person(), "", p.item, rng));
            } else if (before_terminal) {
                if (rng.chance(0.6)) events.push_back(fill(rng.pick(kActive), person(), "", p.item, rng));
            } else if (t == *p.terminal) {
                state = p.terminal_state;
                const auto& pool = state == ItemState::destroyed ? kDestroyed : kLost;
                events.push_back(fill(rng.pick(pool), person(), "", p.item, rng));
            } else if (!p.comeback || t < *p.comeback) {
                state = p.terminal_state;
            } else if (t == *p.comeback) {
                if (p.explained) {
                    events.push_back(fill(rng.pick(kExplain), person(), "", p.item, rng));
                    truth.explained_reappearances.push_back(
                        {p.item, static_cast<EpisodeIndex>(*p.terminal), p.terminal_state, static_cast<EpisodeIndex>(t),
                         ItemState::active, true});
                } else {
                    state = p.terminal_state;
                    truth.planted_errors.push_back({p.item, static_cast<EpisodeIndex>(*p.terminal), p.terminal_state,
                                                    static_cast<EpisodeIndex>(t), ItemState::active, false});
                }
                events.push_back(fill(rng.pick(kActive), person(), "", p.item, rng));
            } else if (p.explained) {
                if (rng.chance(0.5)) events.push_back(fill(rng.pick(kActive), person(), "", p.item, rng));
            } else {
                // An unexplained comeback is the item's last mention.
                state = p.terminal_state;
            }
            timelines[k].states.push_back({static_cast<EpisodeIndex>(t), state});
            // Event sentences keep their relative order; position among fillers is random.
            std::size_t lo = 0;
            for (auto& e : events) {
                const auto pos = rng.between(lo, sentences.size());
                sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(pos), std::move(e));
                lo = pos + 1;
            }
        }

        std::string body;
        for (const auto& s : sentences) body += (body.empty() ? "" : " ") + s;
        story.episodes.push_back(make_episode(static_cast<EpisodeIndex>(t), std::move(body)));
    }

    for (std::size_t k = 0; k < plans.size(); ++k) {
        timelines[k].item_id = plans[k].item;
        const auto& p = plans[k];
        if (p.terminal) {
            const bool destroyed = p.terminal_state == ItemState::destroyed;
            truth.qa.push_back({story.story_id,
                                "In which episode was the " + p.item + (destroyed ? " destroyed?" : " lost?"),
                                "episode " + std::to_string(*p.terminal)});
        }
    }
    truth.timelines = std::move(timelines);
    std::sort(truth.planted_errors.begin(), truth.planted_errors.end(),
              [](const auto& a, const auto& b) { return a.reappearance_episode < b.reappearance_episode; });
    return {std::move(story), std::move(truth)};
}

json error_list(const std::vector<ContinuityError>& errors) {
    json out = json::array();
    for (const auto& e : errors) out.push_back(continuity_error_to_json(e));
    return out;
}

std::vector<ContinuityError> error_list_from(const json& j) {
    std::vector<ContinuityError> out;
    for (const auto& e : j) out.push_back(continuity_error_from_json(e));
    return out;
}

DetectionScore finish(std::size_t tp, std::size_t fp, std::size_t fn) {
    DetectionScore s;
    s.true_positives = tp;
    s.false_positives = fp;
    s.false_negatives = fn;
    const auto reported = tp + fp;
    const auto planted = tp + fn;
    s.degenerate = reported == 0 || planted == 0;
    s.precision = reported == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(reported);
    s.recall = planted == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(planted);
    s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

}  // namespace

void FuzzSpec::validate() const {
    if (n_stories == 0) throw ValidationError("fuzz.stories", "must be positive");
    if (episodes_min < 3 || episodes_min > episodes_max) throw ValidationError("fuzz.episodes", "need 3 <= min <= max");
    if (items_min == 0 || items_min > items_max) throw ValidationError("fuzz.items", "need 1 <= min <= max");
    if (items_max > kItems.size()) throw ValidationError("fuzz.items", "at most " + std::to_string(kItems.size()));
    if (!(violation_rate >= 0.0 && violation_rate <= 1.0)) throw ValidationError("fuzz.violation_rate", "must lie in [0, 1]");
    if (!(explained_rate >= 0.0 && explained_rate <= 1.0)) throw ValidationError("fuzz.explained_rate", "must lie in [0, 1]");
}

json fuzz_spec_to_json(const FuzzSpec& s) {
    return {{"seed", s.seed},
            {"n_stories", s.n_stories},
            {"episodes", {s.episodes_min, s.episodes_max}},
            {"items", {s.items_min, s.items_max}},
            {"violation_rate", s.violation_rate},
            {"explained_rate", s.explained_rate}};
}

std::vector<ContinuityError> GroundTruth::planted_errors() const {
    std::vector<ContinuityError> out;
    for (const auto& s : stories) out.insert(out.end(), s.planted_errors.begin(), s.planted_errors.end());
    return out;
}

GoldStandard GroundTruth::gold() const {
    GoldStandard g;
    for (const auto& s : stories) {
        for (const auto& t : s.timelines)
            for (const auto& st : t.states) g.item_states.push_back({s.story_id, t.item_id, st.episode, st.state});
        g.qa.insert(g.qa.end(), s.qa.begin(), s.qa.end());
    }
    return g;
}

json ground_truth_to_json(const GroundTruth& g) {
    json stories = json::array();
    for (const auto& s : g.stories) {
        json timelines = json::array();
        for (const auto& t : s.timelines) {
            json states = json::array();
            for (const auto& st : t.states) states.push_back({{"episode", st.episode}, {"state", std::string(to_string(st.state))}});
            timelines.push_back({{"item_id", t.item_id}, {"states", std::move(states)}});
        }
        json qa = json::array();
        for (const auto& q : s.qa) qa.push_back({{"question", q.question}, {"answer", q.answer}});
        stories.push_back({{"story_id", s.story_id},
                           {"timelines", std::move(timelines)},
                           {"planted_errors", error_list(s.planted_errors)},
                           {"explained_reappearances", error_list(s.explained_reappearances)},
                           {"qa", std::move(qa)}});
    }
    return {{"seed", g.seed}, {"stories", std::move(stories)}};
}

GroundTruth ground_truth_from_json(const json& j) {
    try {
        GroundTruth g;
        g.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& sj : j.at("stories")) {
            StoryTruth s;
            s.story_id = sj.at("story_id").get<std::string>();
            for (const auto& tj : sj.at("timelines")) {
                TrueTimeline t{tj.at("item_id").get<std::string>(), {}};
                for (const auto& st : tj.at("states")) {
                    const auto state = parse_item_state(st.at("state").get<std::string>());
                    if (!state) throw ValidationError("ground_truth.state", "invalid state");
                    t.states.push_back({st.at("episode").get<EpisodeIndex>(), *state});
                }
                s.timelines.push_back(std::move(t));
            }
            s.planted_errors = error_list_from(sj.at("planted_errors"));
            s.explained_reappearances = error_list_from(sj.value("explained_reappearances", json::array()));
            for (const auto& q : sj.value("qa", json::array())) {
                s.qa.push_back({s.story_id, q.at("question").get<std::string>(), q.at("answer").get<std::string>()});
            }
            g.stories.push_back(std::move(s));
        }
        return g;
    } catch (const json::exception& e) {
        throw ValidationError("ground_truth", std::string("malformed file: ") + e.what());
    }
}

FuzzCorpus generate_corpus(const FuzzSpec& spec) {
    spec.validate();
    FuzzCorpus out;
    out.truth.seed = spec.seed;
    for (std::size_t i = 0; i < spec.n_stories; ++i) {
        auto [story, truth] = generate_story(spec, i);
        validate_story(story);
        out.corpus.stories.push_back(std::move(story));
        out.truth.stories.push_back(std::move(truth));
    }
    return out;
}

DetectionScore score_detection(const std::vector<ContinuityError>& reported,
                               const std::vector<ContinuityError>& planted) {
    std::set<std::pair<std::string, EpisodeIndex>> truth;
    for (const auto& e : planted) truth.insert({e.item_id, e.reappearance_episode});
    std::set<std::pair<std::string, EpisodeIndex>> seen;
    for (const auto& e : reported) seen.insert({e.item_id, e.reappearance_episode});
    std::size_t tp = 0;
    for (const auto& k : seen) tp += truth.count(k);
    return finish(tp, seen.size() - tp, truth.size() - tp);
}

DetectionScore score_detection(const std::vector<StoryStates>& reported, const GroundTruth& truth) {
    using Key = std::tuple<std::string, std::string, EpisodeIndex>;
    std::set<Key> planted;
    for (const auto& s : truth.stories)
        for (const auto& e : s.planted_errors) planted.insert({s.story_id, e.item_id, e.reappearance_episode});
    std::set<Key> seen;
    for (const auto& s : reported)
        for (const auto& e : s.errors) seen.insert({s.story_id, e.item_id, e.reappearance_episode});
    std::size_t tp = 0;
    for (const auto& k : seen) tp += planted.count(k);
    return finish(tp, seen.size() - tp, planted.size() - tp);
}

json detection_score_to_json(const DetectionScore& s) {
    return {{"precision", s.precision},
            {"recall", s.recall},
            {"f1", s.f1},
            {"true_positives", s.true_positives},
            {"false_positives", s.false_positives},
            {"false_negatives", s.false_negatives},
            {"degenerate", s.degenerate}};
}

}  // namespace score
