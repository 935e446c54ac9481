#include "score/mock_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "score/embedded.hpp"
#include "score/hash.hpp"

namespace score::mock {

using nlohmann::json;

namespace {

enum class LexClass { explained, destroyed, lost };

struct Lexicons {
    std::unordered_map<std::string, LexClass> state;
    std::vector<LexClass> class_order;
    std::unordered_set<std::string> positive;
    std::unordered_set<std::string> negative;
};

const Lexicons& lexicons() {
    static const Lexicons lex = [] {
        Lexicons l;
        std::istringstream state(std::string(embedded::state_lexicon()));
        for (std::string line; std::getline(state, line);) {
            const auto t = text::trim(line);
            if (t.empty() || t.front() == '#') continue;
            const auto colon = t.find(':');
            if (colon == std::string_view::npos) continue;
            const auto name = text::trim(t.substr(0, colon));
            LexClass cls;
            if (name == "explained") {
                cls = LexClass::explained;
            } else if (name == "destroyed") {
                cls = LexClass::destroyed;
            } else if (name == "lost") {
                cls = LexClass::lost;
            } else {
                continue;
            }
            l.class_order.push_back(cls);
            for (const auto& w : text::words(t.substr(colon + 1))) l.state.emplace(w, cls);
        }
        std::istringstream senti(std::string(embedded::sentiment_lexicon()));
        for (std::string line; std::getline(senti, line);) {
            const auto t = text::trim(line);
            if (t.size() < 3 || t.front() == '#') continue;
            const auto word = text::fold_case(text::trim(t.substr(1)));
            if (t.front() == '+') l.positive.insert(word);
            if (t.front() == '-') l.negative.insert(word);
        }
        return l;
    }();
    return lex;
}

const std::unordered_set<std::string>& function_words() {
    static const std::unordered_set<std::string> words = {
        "the", "a", "an", "in", "on", "at", "as", "but", "and", "then", "when", "while", "after", "before",
        "with", "without", "by", "of", "to", "from", "it", "he", "she", "they", "we", "i", "you", "his", "her",
        "their", "our", "this", "that", "these", "those", "there", "here", "meanwhile", "later", "suddenly",
        "finally", "everyone", "nobody", "someone", "no", "yes", "all", "each", "every", "its", "for", "so",
        "yet", "once", "now", "soon", "still", "even", "if", "outside", "inside", "above", "below", "nothing",
        "something", "everything", "one", "two", "three", "night", "morning", "evening", "episode", "chapter",
        "which", "what", "where", "who", "why", "how", "was", "were", "is", "did", "does", "do", "had", "has",
        "under", "over", "into", "onto", "near", "beyond", "across", "through", "during", "until", "since",
        "my", "your", "me", "him", "them", "us", "not", "never", "always", "somewhere", "nowhere", "again",
    };
    return words;
}

const std::unordered_set<std::string>& question_words() {
    static const std::unordered_set<std::string> words = {
        "which", "what", "when", "where", "who", "whom", "why", "how", "episode", "episodes", "was", "were",
        "is", "are", "did", "does", "do", "the", "a", "an", "in", "of", "to", "get", "got", "become", "became",
        "first", "finally", "story", "happen", "happened", "at", "time", "point", "by", "be", "been", "it",
    };
    return words;
}

std::string state_word(LexClass c) {
    switch (c) {
        case LexClass::explained: return "recovered";
        case LexClass::destroyed: return "destroyed";
        case LexClass::lost: return "lost";
    }
    return "active";
}

std::optional<LexClass> lexicon_class(const std::vector<std::string>& folded_words) {
    const auto& lex = lexicons();
    std::set<LexClass> hits;
    for (const auto& w : folded_words) {
        if (auto it = lex.state.find(w); it != lex.state.end()) hits.insert(it->second);
    }
    for (auto cls : lex.class_order)
        if (hits.count(cls)) return cls;
    return std::nullopt;
}

bool is_name_token(std::string_view w) {
    if (w.size() < 2 || w.front() < 'A' || w.front() > 'Z') return false;
    return std::all_of(w.begin() + 1, w.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

bool is_alias_word(const std::string& folded, const std::vector<KeyItem>& items) {
    for (const auto& item : items)
        for (const auto& name : item.names)
            for (const auto& w : text::words(name))
                if (w == folded) return true;
    return false;
}

bool is_character_token(std::string_view w, const std::vector<KeyItem>& items) {
    if (!is_name_token(w)) return false;
    const auto folded = text::fold_case(w);
    return !function_words().count(folded) && !is_alias_word(folded, items);
}

std::vector<KeyItem> items_from_json(const json& j) {
    std::vector<KeyItem> items;
    for (const auto& ij : j) items.push_back({ij.at("item_id").get<std::string>(), ij.at("names").get<std::vector<std::string>>()});
    return items;
}

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

SentenceState classify_sentence(std::string_view sentence) {
    SentenceState out;
    const auto cls = lexicon_class(text::words(sentence));
    if (!cls) return out;
    out.lexicon_hit = true;
    switch (*cls) {
        case LexClass::explained:
            out.state = ItemState::active;
            out.explained = true;
            break;
        case LexClass::destroyed: out.state = ItemState::destroyed; break;
        case LexClass::lost: out.state = ItemState::lost; break;
    }
    return out;
}

bool mentions(std::string_view s, const KeyItem& item) {
    return std::any_of(item.names.begin(), item.names.end(),
                       [&](const std::string& name) { return text::contains_phrase(s, name); });
}

std::vector<MockObservation> extract_states(std::string_view episode_text, const std::vector<KeyItem>& items) {
    const auto sentences = text::sentence_spans(episode_text);
    std::vector<MockObservation> out;
    for (const auto& item : items) {
        std::optional<MockObservation> obs;
        bool explained = false;
        for (const auto& span : sentences) {
            const auto sentence = episode_text.substr(span.begin, span.size());
            if (!mentions(sentence, item)) continue;
            const auto st = classify_sentence(sentence);
            explained = explained || st.explained;
            obs = MockObservation{item.item_id, st.state, false, span};
        }
        if (obs) {
            obs->explained = explained;
            out.push_back(*obs);
        }
    }
    return out;
}

LexiconCounts count_sentiment_words(std::string_view text) {
    const auto& lex = lexicons();
    LexiconCounts c;
    for (const auto& w : text::words(text)) {
        if (lex.positive.count(w)) ++c.positive;
        if (lex.negative.count(w)) ++c.negative;
    }
    return c;
}

double lexicon_sentiment(std::string_view text) {
    const auto c = count_sentiment_words(text);
    const double p = static_cast<double>(c.positive);
    const double n = static_cast<double>(c.negative);
    const double raw = (p - n) / (p + n + 1.0);
    return (raw + 1.0) / 2.0;
}

Embedding hashed_embedding(std::string_view text, std::uint32_t dim) {
    Embedding v(dim, 0.0);
    const auto ws = text::words(text);
    auto add = [&](const std::string& feature) {
        const auto h = fnv1a64(feature);
        v[h % dim] += (h >> 63) ? -1.0 : 1.0;
    };
    for (std::size_t i = 0; i < ws.size(); ++i) {
        add("u:" + ws[i]);
        if (i + 1 < ws.size()) add("b:" + ws[i] + " " + ws[i + 1]);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
        v[fnv1a64(std::string("empty:") + std::string(text)) % dim] = 1.0;
        return v;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

std::optional<std::string> leading_character(std::string_view sentence, const std::vector<KeyItem>& items) {
    const auto ws = text::word_spans(sentence);
    for (std::size_t i = 0; i + 1 < ws.size(); ++i) {
        const auto next = ws[i + 1].text;
        if (is_character_token(ws[i].text, items) && next.front() >= 'a' && next.front() <= 'z') {
            return std::string(ws[i].text);
        }
    }
    return std::nullopt;
}

std::vector<std::string> characters_in(std::string_view sentence, const std::vector<KeyItem>& items) {
    std::vector<std::string> out;
    for (const auto& w : text::word_spans(sentence)) {
        if (is_character_token(w.text, items) &&
            std::find(out.begin(), out.end(), w.text) == out.end()) {
            out.emplace_back(w.text);
        }
    }
    return out;
}

std::string handle_extract(const json& input) {
    const auto episode_text = input.at("text").get<std::string>();
    const auto items = items_from_json(input.at("items"));
    json observations = json::array();
    for (const auto& o : extract_states(episode_text, items)) {
        observations.push_back({{"item_id", o.item_id},
                                {"state", std::string(to_string(o.state))},
                                {"explained", o.explained},
                                {"evidence", {o.evidence.begin, o.evidence.end}}});
    }
    return json{{"observations", observations}}.dump();
}

std::string handle_summarize(const json& input) {
    const auto episode_text = input.at("text").get<std::string>();
    const auto items = items_from_json(input.at("items"));
    const auto spans = text::sentence_spans(episode_text);
    std::vector<std::string> sentences;
    for (const auto& s : spans) sentences.emplace_back(episode_text.substr(s.begin, s.size()));

    std::string synopsis;
    for (std::size_t i = 0; i < std::min<std::size_t>(2, sentences.size()); ++i) {
        if (i) synopsis += ' ';
        synopsis += sentences[i];
    }

    json plot_points = json::array();
    json actions = json::array();
    json interactions = json::array();
    json relationships = json::array();
    json emotional = json::array();
    for (const auto& sentence : sentences) {
        const auto actor = leading_character(sentence, items);
        bool item_sentence = false;
        for (const auto& item : items) {
            if (!mentions(sentence, item)) continue;
            item_sentence = true;
            const auto st = classify_sentence(sentence);
            interactions.push_back({{"item_id", item.item_id},
                                    {"actor", actor ? json(*actor) : json(nullptr)},
                                    {"description", sentence},
                                    {"implied_state", st.lexicon_hit ? json(std::string(to_string(st.state))) : json(nullptr)}});
        }
        if (actor) actions.push_back({{"character", *actor}, {"description", sentence}});
        if ((actor || item_sentence) && plot_points.size() < 6) plot_points.push_back(sentence);

        const auto names = characters_in(sentence, items);
        if (names.size() >= 2) relationships.push_back(text::join(names, ", ") + ": " + sentence);
        const auto counts = count_sentiment_words(sentence);
        if (counts.positive + counts.negative > 0) emotional.push_back(sentence);
    }
    if (plot_points.empty() && !sentences.empty()) plot_points.push_back(sentences.front());

    return json{{"synopsis", synopsis},
                {"plot_points", plot_points},
                {"actions", actions},
                {"interactions", interactions},
                {"relationships", relationships},
                {"emotional_changes", emotional}}
        .dump();
}

std::string handle_evaluate(const json& input) {
    const auto& errors = input.at("continuity_errors");
    const auto& context = input.at("context");
    const bool has_summary = input.value("has_summary", false);

    const int n_errors = static_cast<int>(errors.size());
    const int key_item = n_errors == 0 ? 5 : std::max(1, 4 - n_errors);
    const int character = std::min(5, 3 + (context.empty() ? 0 : 1) + (has_summary ? 1 : 0));
    const int plot = std::min(5, 3 + (has_summary ? 1 : 0) + (context.size() >= 2 ? 1 : 0));

    int emotional = 3;
    if (!context.empty() && input.contains("focus_sentiment") && input["focus_sentiment"].is_number()) {
        const double focus = input["focus_sentiment"].get<double>();
        double total = 0.0;
        for (const auto& c : context) total += std::abs(focus - c.value("sentiment", 0.5));
        const double mean = total / static_cast<double>(context.size());
        emotional = std::clamp(static_cast<int>(std::lround(5.0 - 4.0 * mean)), 1, 5);
    }

    json cited = json::array();
    for (const auto& e : errors) {
        cited.push_back({{"item_id", e.at("item_id")}, {"reappearance_episode", e.at("reappearance_episode")}});
    }
    std::string rationale = "Reviewed against " + std::to_string(context.size()) + " related episode(s). ";
    rationale += n_errors == 0 ? "No key item continuity errors."
                               : std::to_string(n_errors) + " key item continuity error(s) flagged.";

    return json{{"facet_scores",
                 {{"character_consistency", character},
                  {"plot_progression", plot},
                  {"emotional_authenticity", emotional},
                  {"key_item_continuity", key_item}}},
                {"rationale", rationale},
                {"cited_errors", cited},
                {"item_states", input.value("item_states", json::array())}}
        .dump();
}

std::string handle_answer(const json& input) {
    const auto question = input.at("question").get<std::string>();
    const auto& context = input.at("context");
    if (context.empty()) return json{{"answer", "insufficient context"}, {"supporting_episodes", json::array()}}.dump();

    const auto qwords = text::words(question);
    const auto target = lexicon_class(qwords);
    const auto& lex = lexicons();
    std::vector<std::string> subject;
    for (const auto& w : qwords) {
        if (question_words().count(w) || lex.state.count(w)) continue;
        if (std::find(subject.begin(), subject.end(), w) == subject.end()) subject.push_back(w);
    }

    struct Match {
        std::string story_id;
        EpisodeIndex episode;
        std::size_t rank;
    };
    std::optional<Match> best;
    for (std::size_t rank = 0; rank < context.size(); ++rank) {
        const auto& entry = context[rank];
        const auto body = entry.at("text").get<std::string>();
        const Match m{entry.at("story_id").get<std::string>(), entry.at("episode_index").get<EpisodeIndex>(), rank};
        for (const auto& span : text::sentence_spans(body)) {
            const auto sw = text::words(std::string_view(body).substr(span.begin, span.size()));
            const bool has_subject = std::all_of(subject.begin(), subject.end(), [&](const std::string& w) {
                return std::find(sw.begin(), sw.end(), w) != sw.end();
            });
            if (!has_subject || (target && lexicon_class(sw) != target)) continue;
            // With a state in the question the earliest episode answers it;
            // otherwise the best-ranked entry does.
            const bool better = !best || (target ? m.episode < best->episode : m.rank < best->rank);
            if (better) best = m;
            break;
        }
    }
    if (!best) return json{{"answer", "The context does not say."}, {"supporting_episodes", json::array()}}.dump();

    std::string answer;
    const auto subject_text = text::join(subject, " ");
    if (target) {
        answer = "The " + subject_text + " was " + state_word(*target) + " in episode " + std::to_string(best->episode) + ".";
    } else {
        answer = "This is described in episode " + std::to_string(best->episode) + ".";
    }
    return json{{"answer", answer},
                {"supporting_episodes", json::array({{{"story_id", best->story_id}, {"episode_index", best->episode}}})}}
        .dump();
}

std::string handle_repair(const json& input) {
    const auto reply = input.value("reply", "");
    if (auto j = extract_json_object(reply)) return j->dump();
    return reply;
}

std::string MockBackend::complete(const std::string& /*model*/, const std::string& prompt,
                                  const CompletionParams& /*params*/) {
    const auto hashed = [&] { return "mock-reply:" + sha256_hex(prompt).substr(0, 16); };
    const auto env = parse_envelope(prompt);
    if (!env) return hashed();
    if (env->task == "score_sentiment") return format_score(lexicon_sentiment(env->input));

    json input;
    try {
        input = json::parse(env->input);
    } catch (const json::parse_error&) {
        return hashed();
    }
    try {
        if (env->task == "extract_item_states" || env->task == "report_item_states") return handle_extract(input);
        if (env->task == "summarize_episode") return handle_summarize(input);
        if (env->task == "evaluate_episode") return handle_evaluate(input);
        if (env->task == "answer_query") return handle_answer(input);
        if (env->task == "repair_json") return handle_repair(input);
    } catch (const json::exception&) {
        return hashed();
    }
    return hashed();
}

std::vector<Embedding> MockBackend::embed(const std::string& /*model*/, const std::vector<std::string>& texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hashed_embedding(t, embed_dim_));
    return out;
}

}  // namespace score::mock
