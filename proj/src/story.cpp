#include "score/story.hpp"

#include <algorithm>
#include <set>

#include "score/error.hpp"
#include "score/file_io.hpp"
#include "score/text.hpp"

namespace score {

using nlohmann::json;

namespace {

constexpr std::pair<Genre, std::string_view> kGenres[] = {
    {Genre::science_fiction, "science_fiction"},
    {Genre::drama, "drama"},
    {Genre::fantasy, "fantasy"},
    {Genre::comedy, "comedy"},
    {Genre::other, "other"},
};

constexpr std::pair<ItemState, std::string_view> kStates[] = {
    {ItemState::active, "active"},
    {ItemState::lost, "lost"},
    {ItemState::destroyed, "destroyed"},
};

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ValidationError(where.empty() ? key : where + "." + key, "unknown field");
        }
    }
}

const json& require(const json& obj, const std::string& where, const char* key) {
    auto it = obj.find(key);
    const std::string field = where.empty() ? key : where + "." + key;
    if (it == obj.end()) throw ValidationError(field, "missing required field");
    return *it;
}

std::string require_string(const json& obj, const std::string& where, const char* key) {
    const auto& v = require(obj, where, key);
    if (!v.is_string()) throw ValidationError(where.empty() ? key : where + "." + key, "expected string");
    return v.get<std::string>();
}

}  // namespace

std::string_view to_string(Genre g) {
    for (auto [v, name] : kGenres)
        if (v == g) return name;
    return "other";
}

std::string_view to_string(ItemState s) {
    for (auto [v, name] : kStates)
        if (v == s) return name;
    return "active";
}

std::optional<Genre> parse_genre(std::string_view s) {
    for (auto [v, name] : kGenres)
        if (name == s) return v;
    return std::nullopt;
}

std::optional<ItemState> parse_item_state(std::string_view s) {
    for (auto [v, name] : kStates)
        if (name == s) return v;
    return std::nullopt;
}

std::uint32_t estimate_tokens(std::string_view text) {
    const auto words = text::word_count(text);
    return static_cast<std::uint32_t>((words * 4 + 2) / 3);
}

Episode make_episode(EpisodeIndex index, std::string text) {
    Episode e;
    e.index = index;
    e.token_estimate = estimate_tokens(text);
    e.text = std::move(text);
    return e;
}

const KeyItem* Story::find_item(std::string_view item_id) const {
    for (const auto& item : key_items)
        if (item.item_id == item_id) return &item;
    return nullptr;
}

const Story* Corpus::find(std::string_view story_id) const {
    for (const auto& s : stories)
        if (s.story_id == story_id) return &s;
    return nullptr;
}

void validate_story(const Story& story) {
    if (text::trim(story.story_id).empty()) throw ValidationError("story_id", "must be non-empty");
    if (story.episodes.empty()) throw ValidationError("episodes", "episode list is empty");

    std::set<std::string> item_ids;
    for (std::size_t i = 0; i < story.key_items.size(); ++i) {
        const auto& item = story.key_items[i];
        const std::string where = "key_items[" + std::to_string(i) + "]";
        if (text::trim(item.item_id).empty()) throw ValidationError(where + ".item_id", "must be non-empty");
        if (!item_ids.insert(item.item_id).second) {
            throw ValidationError(where + ".item_id", "duplicate item_id '" + item.item_id + "'");
        }
        if (item.names.empty()) throw ValidationError(where + ".names", "must list at least one name");
        std::set<std::string> folded;
        for (std::size_t k = 0; k < item.names.size(); ++k) {
            const auto& name = item.names[k];
            const std::string nfield = where + ".names[" + std::to_string(k) + "]";
            if (text::words(name).empty()) throw ValidationError(nfield, "name has no words");
            if (!folded.insert(text::fold_case(text::trim(name))).second) {
                throw ValidationError(nfield, "duplicate alias '" + name + "' (case-insensitive)");
            }
        }
    }

    for (std::size_t i = 0; i < story.episodes.size(); ++i) {
        const auto& ep = story.episodes[i];
        const std::string where = "episodes[" + std::to_string(i) + "]";
        if (ep.index != i) {
            throw ValidationError(where + ".index", "non-contiguous episode index " + std::to_string(ep.index) +
                                                        " (expected " + std::to_string(i) + ")");
        }
        if (text::trim(ep.text).empty()) throw ValidationError(where + ".text", "empty episode text");
        if (ep.token_estimate != estimate_tokens(ep.text)) {
            throw ValidationError(where + ".token_estimate", "does not match the text");
        }
    }
}

Story story_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("$", "expected a JSON object");
    check_keys(j, "", {"story_id", "title", "genre", "key_items", "episodes"});

    Story story;
    story.story_id = require_string(j, "", "story_id");
    story.title = require_string(j, "", "title");
    const auto genre = require_string(j, "", "genre");
    auto g = parse_genre(genre);
    if (!g) throw ValidationError("genre", "unknown genre '" + genre + "'");
    story.genre = *g;

    if (auto it = j.find("key_items"); it != j.end()) {
        if (!it->is_array()) throw ValidationError("key_items", "expected array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& ij = (*it)[i];
            const std::string where = "key_items[" + std::to_string(i) + "]";
            if (!ij.is_object()) throw ValidationError(where, "expected object");
            check_keys(ij, where, {"item_id", "names"});
            KeyItem item;
            item.item_id = require_string(ij, where, "item_id");
            const auto& names = require(ij, where, "names");
            if (!names.is_array()) throw ValidationError(where + ".names", "expected array");
            for (std::size_t k = 0; k < names.size(); ++k) {
                if (!names[k].is_string()) {
                    throw ValidationError(where + ".names[" + std::to_string(k) + "]", "expected string");
                }
                item.names.push_back(names[k].get<std::string>());
            }
            story.key_items.push_back(std::move(item));
        }
    }

    const auto& eps = require(j, "", "episodes");
    if (!eps.is_array()) throw ValidationError("episodes", "expected array");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const auto& ej = eps[i];
        const std::string where = "episodes[" + std::to_string(i) + "]";
        if (!ej.is_object()) throw ValidationError(where, "expected object");
        check_keys(ej, where, {"index", "text"});
        const auto& idx = require(ej, where, "index");
        if (!idx.is_number_integer() || idx.get<std::int64_t>() < 0 ||
            idx.get<std::int64_t>() > std::numeric_limits<EpisodeIndex>::max()) {
            throw ValidationError(where + ".index", "expected nonnegative integer");
        }
        story.episodes.push_back(
            make_episode(static_cast<EpisodeIndex>(idx.get<std::int64_t>()), require_string(ej, where, "text")));
    }

    validate_story(story);
    return story;
}

Story parse_story(std::string_view bytes) {
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
    }
    return story_from_json(j);
}

json story_to_json(const Story& story) {
    json items = json::array();
    for (const auto& item : story.key_items) {
        items.push_back({{"item_id", item.item_id}, {"names", item.names}});
    }
    json eps = json::array();
    for (const auto& ep : story.episodes) {
        eps.push_back({{"index", ep.index}, {"text", ep.text}});
    }
    return {
        {"story_id", story.story_id},
        {"title", story.title},
        {"genre", std::string(to_string(story.genre))},
        {"key_items", std::move(items)},
        {"episodes", std::move(eps)},
    };
}

std::string serialize_story(const Story& story) { return story_to_json(story).dump(2); }

void validate_corpus(const Corpus& corpus) {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < corpus.stories.size(); ++i) {
        if (!ids.insert(corpus.stories[i].story_id).second) {
            throw ValidationError("stories[" + std::to_string(i) + "].story_id",
                                  "duplicate story_id '" + corpus.stories[i].story_id + "'");
        }
    }
}

Corpus load_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());

    std::vector<fs::path> files;
    const auto manifest = dir / "corpus.json";
    if (fs::exists(manifest)) {
        json m;
        const auto raw = read_file(manifest);
        try {
            m = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw ParseError("corpus.json: malformed JSON", e.byte);
        }
        if (!m.is_object() || !m.contains("files") || !m["files"].is_array()) {
            throw ValidationError("corpus.json.files", "expected array of file names");
        }
        for (const auto& f : m["files"]) {
            if (!f.is_string()) throw ValidationError("corpus.json.files", "expected string entries");
            files.push_back(dir / f.get<std::string>());
        }
    } else {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    }

    Corpus corpus;
    for (const auto& f : files) {
        try {
            corpus.stories.push_back(parse_story(read_file(f)));
        } catch (const ValidationError& e) {
            throw ValidationError(f.filename().string() + ":" + e.field(), e.detail());
        }
    }
    validate_corpus(corpus);
    return corpus;
}

}  // namespace score
