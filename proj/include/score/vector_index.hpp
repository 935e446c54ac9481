#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "score/story.hpp"

namespace score {

using Embedding = std::vector<double>;

enum class EntryKind { chunk, summary };

std::string_view to_string(EntryKind k);
std::optional<EntryKind> parse_entry_kind(std::string_view s);

struct IndexEntry {
    std::string entry_id;
    EntryKind kind = EntryKind::summary;
    std::string story_id;
    EpisodeIndex episode_index = 0;
    Embedding embedding;

    bool operator==(const IndexEntry&) const = default;
};

struct SearchHit {
    std::string entry_id;
    double score = 0.0;

    bool operator==(const SearchHit&) const = default;
};

/// u.v / (|u||v|), clamped to [-1, 1]. Throws ContractError on dimension
/// mismatch, zero vectors or non-finite entries.
double cosine(std::span<const double> u, std::span<const double> v);

/// Exact (brute-force) cosine index. Embeddings are stored unit-normalized so
/// search is a dot product. Single writer until freeze(); a frozen index is
/// immutable and safe to search from many threads.
class FlatIndex {
public:
    using Filter = std::function<bool(const IndexEntry&)>;

    explicit FlatIndex(std::uint32_t dimension);

    std::uint32_t dimension() const { return dimension_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }

    /// Throws ContractError on dimension mismatch, duplicate id, zero or
    /// non-finite vector, or when frozen. The index is unchanged on error.
    void add(IndexEntry entry);

    /// min(n, matching) hits, score descending, ties by entry_id ascending.
    /// Throws Error("index empty") when the index has no entries.
    std::vector<SearchHit> search_top_n(std::span<const double> query, std::size_t n,
                                        const Filter& filter = {}) const;

    const IndexEntry* find(std::string_view entry_id) const;
    const std::vector<IndexEntry>& entries() const { return entries_; }

    /// Writes `<base>.vec` (binary) and `<base>.meta.json`.
    void save(const std::filesystem::path& base) const;
    /// Loaded indexes come back frozen.
    static FlatIndex load(const std::filesystem::path& base);

    bool operator==(const FlatIndex& other) const {
        return dimension_ == other.dimension_ && entries_ == other.entries_;
    }

private:
    std::uint32_t dimension_;
    bool frozen_ = false;
    std::vector<IndexEntry> entries_;
};

}  // namespace score
