#include "score/chunker.hpp"

#include "score/error.hpp"

namespace score {

namespace {

bool is_boundary(char c) { return c == '.' || c == '!' || c == '?' || c == '\n'; }

}  // namespace

std::vector<Chunk> segment(const std::string& story_id, const Episode& episode, const ChunkerConfig& config) {
    if (config.max_chars == 0) throw ContractError("max_chars must be positive");
    if (config.overlap_chars >= config.max_chars) throw ContractError("overlap_chars must be smaller than max_chars");

    const auto& src = episode.text;
    const auto cps = text::code_point_offsets(src);  // cps[i] = byte offset of code point i
    const std::size_t n = cps.size() - 1;
    const std::size_t lookback = config.max_chars / 5;

    std::vector<Chunk> out;
    std::size_t start = 0;  // in code points
    while (true) {
        std::size_t end;
        if (n - start <= config.max_chars) {
            end = n;
        } else {
            end = start + config.max_chars;
            // Cut after the last boundary character inside the lookback
            // window, as long as the next chunk still moves forward.
            for (std::size_t cut = end; cut > end - lookback; --cut) {
                const auto last = cut - 1;  // code point ending the chunk
                if (cut - start <= config.overlap_chars) break;
                if (cps[last + 1] - cps[last] == 1 && is_boundary(src[cps[last]])) {
                    end = cut;
                    break;
                }
            }
        }
        const text::Span range{cps[start], cps[end]};
        out.push_back({story_id, episode.index, out.size(), src.substr(range.begin, range.size()), range});
        if (end == n) break;
        start = end - config.overlap_chars;
    }
    return out;
}

}  // namespace score
