#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace score {

using EpisodeIndex = std::uint32_t;

enum class Genre { science_fiction, drama, fantasy, comedy, other };

enum class ItemState { active, lost, destroyed };

std::string_view to_string(Genre g);
std::string_view to_string(ItemState s);
std::optional<Genre> parse_genre(std::string_view s);
std::optional<ItemState> parse_item_state(std::string_view s);

inline bool is_terminal(ItemState s) { return s != ItemState::active; }

struct Episode {
    EpisodeIndex index = 0;
    std::string text;
    std::uint32_t token_estimate = 0;

    bool operator==(const Episode&) const = default;
};

/// ceil(words * 4 / 3), where words are whitespace-delimited.
std::uint32_t estimate_tokens(std::string_view text);

Episode make_episode(EpisodeIndex index, std::string text);

struct KeyItem {
    std::string item_id;
    std::vector<std::string> names;

    bool operator==(const KeyItem&) const = default;
};

struct CharacterAction {
    std::string character;
    EpisodeIndex episode_index = 0;
    std::string description;

    bool operator==(const CharacterAction&) const = default;
};

struct ItemInteraction {
    std::string item_id;
    EpisodeIndex episode_index = 0;
    std::optional<std::string> actor;
    std::string description;
    std::optional<ItemState> implied_state;

    bool operator==(const ItemInteraction&) const = default;
};

struct Story {
    std::string story_id;
    std::string title;
    Genre genre = Genre::other;
    std::vector<KeyItem> key_items;
    std::vector<Episode> episodes;

    const KeyItem* find_item(std::string_view item_id) const;

    bool operator==(const Story&) const = default;
};

/// Throws ValidationError naming the offending field.
void validate_story(const Story& story);

/// Throws ParseError (with byte offset) for malformed JSON and
/// ValidationError for schema or invariant violations.
Story parse_story(std::string_view bytes);

/// Canonical form: UTF-8, keys sorted, two-space indent, no trailing newline.
std::string serialize_story(const Story& story);

nlohmann::json story_to_json(const Story& story);
Story story_from_json(const nlohmann::json& j);

struct Corpus {
    std::vector<Story> stories;

    const Story* find(std::string_view story_id) const;
};

/// Loads a directory of story files. When `corpus.json` exists it must hold
/// `{"files": [...]}` naming the files to load in order; otherwise every
/// `*.json` file is loaded in lexicographic order.
Corpus load_corpus(const std::filesystem::path& dir);

/// Throws ValidationError on duplicate story ids.
void validate_corpus(const Corpus& corpus);

}  // namespace score
