#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "score/story.hpp"
#include "score/text.hpp"

namespace score {

struct ChunkerConfig {
    std::size_t max_chars = 1200;
    std::size_t overlap_chars = 200;
};

struct Chunk {
    std::string story_id;
    EpisodeIndex episode_index = 0;
    std::size_t seq = 0;
    std::string text;
    /// Byte range into the episode text.
    text::Span char_range;

    bool operator==(const Chunk&) const = default;
};

/// Splits `episode.text` into chunks of at most `max_chars` code points.
/// Consecutive chunks share exactly `overlap_chars` code points. A split
/// prefers the last sentence boundary ('.', '!', '?', newline) within the
/// final 20% of the window, else falls back to a hard split. Ranges are byte
/// offsets and never cut a UTF-8 sequence. Throws ContractError when
/// overlap_chars >= max_chars.
std::vector<Chunk> segment(const std::string& story_id, const Episode& episode, const ChunkerConfig& config);

}  // namespace score
