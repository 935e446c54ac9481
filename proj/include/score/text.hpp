#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace score::text {

/// Byte range [begin, end) into some source string.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool operator==(const Span&) const = default;
};

std::string_view trim(std::string_view s);

/// ASCII case folding; non-ASCII bytes pass through unchanged.
std::string fold_case(std::string_view s);

/// Number of whitespace-delimited words.
std::size_t word_count(std::string_view s);

/// Alphanumeric runs, case-folded. Non-ASCII bytes count as word characters.
std::vector<std::string> words(std::string_view s);

/// Same as words() but keeps original case and the byte span of each word.
struct Word {
    std::string_view text;
    Span span;
};
std::vector<Word> word_spans(std::string_view s);

/// Sentence spans: a sentence ends after '.', '!' or '?' (plus any closing
/// quotes) or at a newline. Spans are trimmed of surrounding whitespace and
/// empty sentences are dropped.
std::vector<Span> sentence_spans(std::string_view s);

/// True when `phrase` (one or more words) occurs in `s` on word boundaries,
/// ignoring ASCII case.
bool contains_phrase(std::string_view s, std::string_view phrase);

/// Byte offsets of UTF-8 code point starts, plus a final entry equal to s.size().
std::vector<std::size_t> code_point_offsets(std::string_view s);

bool is_valid_utf8(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace score::text
