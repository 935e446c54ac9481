#pragma once

#include <span>
#include <string_view>

namespace score::embedded {

struct File {
    std::string_view name;
    std::string_view content;
};

/// Default prompt templates from prompts/*.txt, keyed by file stem.
std::span<const File> prompts();

std::string_view sentiment_lexicon();
std::string_view state_lexicon();

}  // namespace score::embedded
