#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "score/llm_gateway.hpp"
#include "score/story.hpp"
#include "score/text.hpp"

namespace score::mock {

/// Lexicon-driven reading of one sentence.
struct SentenceState {
    ItemState state = ItemState::active;
    bool explained = false;
    /// True when some lexicon word matched; false means "plain mention".
    bool lexicon_hit = false;
};

SentenceState classify_sentence(std::string_view sentence);

/// True when any alias of `item` occurs in `s` on word boundaries (case-insensitive).
bool mentions(std::string_view s, const KeyItem& item);

struct MockObservation {
    std::string item_id;
    ItemState state = ItemState::active;
    bool explained = false;
    text::Span evidence;
};

/// One observation per mentioned item: the state of its last mention sentence;
/// explained when any mention sentence carries an explanation word.
std::vector<MockObservation> extract_states(std::string_view episode_text, const std::vector<KeyItem>& items);

/// Lexicon sentiment: (pos - neg) / (pos + neg + 1), mapped from [-1, 1] to
/// [0, 1]. 0.5 when no lexicon word occurs.
double lexicon_sentiment(std::string_view text);

struct LexiconCounts {
    std::size_t positive = 0;
    std::size_t negative = 0;
};
LexiconCounts count_sentiment_words(std::string_view text);

/// Case-folded unigrams and bigrams, signed-hashed into `dim` buckets and
/// unit-normalized.
Embedding hashed_embedding(std::string_view text, std::uint32_t dim);

/// Capitalized word followed by a lowercase word, skipping sentence-initial
/// function words ("The", "Then", ...) and item aliases.
std::optional<std::string> leading_character(std::string_view sentence, const std::vector<KeyItem>& items);
std::vector<std::string> characters_in(std::string_view sentence, const std::vector<KeyItem>& items);

/// Task handlers, one per prompt template. Each takes the envelope input
/// and returns the reply text.
std::string handle_extract(const nlohmann::json& input);
std::string handle_summarize(const nlohmann::json& input);
std::string handle_evaluate(const nlohmann::json& input);
std::string handle_answer(const nlohmann::json& input);
std::string handle_repair(const nlohmann::json& input);

/// Deterministic offline backend. Prompts built from the project's templates
/// are answered by the rule engine above; any other prompt gets a reply
/// derived from the prompt hash.
class MockBackend final : public Backend {
public:
    explicit MockBackend(std::uint32_t embed_dim) : embed_dim_(embed_dim) {}

    std::string complete(const std::string& model, const std::string& prompt, const CompletionParams& params) override;
    std::vector<Embedding> embed(const std::string& model, const std::vector<std::string>& texts) override;
    bool has_native_sentiment() const override { return true; }
    double native_sentiment(const std::string& text) override { return lexicon_sentiment(text); }
    bool rule_based() const override { return true; }

private:
    std::uint32_t embed_dim_;
};

}  // namespace score::mock
