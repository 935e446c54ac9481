#include "score/vector_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "score/error.hpp"
#include "score/file_io.hpp"
#include "score/hash.hpp"

namespace score {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'C', 'O', 'R', 'E', 'V', 'E', 'C'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kHeaderSize = sizeof(kMagic) + 4 + 4 + 8 + 32;

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw ContractError(std::string(what) + ": non-finite component");
    }
}

/// Scaled by the max magnitude first so huge components do not overflow.
Embedding normalized(std::span<const double> v, const char* what) {
    check_finite(v, what);
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) throw ContractError(std::string(what) + ": zero vector");
    double sum = 0.0;
    for (double x : v) sum += (x / scale) * (x / scale);
    const double norm = std::sqrt(sum);
    Embedding out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] / scale) / norm;
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t at) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(static_cast<std::uint8_t>(in[at + i])) << (8 * i);
    }
    return value;
}

std::filesystem::path with_suffix(const std::filesystem::path& base, const char* suffix) {
    auto p = base;
    p += suffix;
    return p;
}

}  // namespace

std::string_view to_string(EntryKind k) { return k == EntryKind::chunk ? "chunk" : "summary"; }

std::optional<EntryKind> parse_entry_kind(std::string_view s) {
    if (s == "chunk") return EntryKind::chunk;
    if (s == "summary") return EntryKind::summary;
    return std::nullopt;
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ContractError("cosine: dimension mismatch");
    check_finite(u, "cosine");
    check_finite(v, "cosine");
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uu += u[i] * u[i];
        vv += v[i] * v[i];
        uv += u[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) throw ContractError("cosine: zero vector");
    if (!std::isfinite(uu) || !std::isfinite(vv) || !std::isfinite(uv)) {
        const auto a = normalized(u, "cosine");
        const auto b = normalized(v, "cosine");
        return std::clamp(dot(a, b), -1.0, 1.0);
    }
    return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

FlatIndex::FlatIndex(std::uint32_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw ContractError("index dimension must be positive");
}

void FlatIndex::add(IndexEntry entry) {
    if (frozen_) throw ContractError("index is frozen");
    if (entry.embedding.size() != dimension_) {
        throw ContractError("dimension mismatch: expected " + std::to_string(dimension_) + ", got " +
                            std::to_string(entry.embedding.size()));
    }
    if (find(entry.entry_id)) throw ContractError("duplicate entry_id '" + entry.entry_id + "'");
    entry.embedding = normalized(entry.embedding, "add");
    entries_.push_back(std::move(entry));
}

const IndexEntry* FlatIndex::find(std::string_view entry_id) const {
    for (const auto& e : entries_)
        if (e.entry_id == entry_id) return &e;
    return nullptr;
}

std::vector<SearchHit> FlatIndex::search_top_n(std::span<const double> query, std::size_t n,
                                               const Filter& filter) const {
    if (entries_.empty()) throw Error(ErrorKind::validation, "index empty");
    if (query.size() != dimension_) throw ContractError("query dimension mismatch");
    if (n == 0) throw ContractError("n must be positive");
    const auto q = normalized(query, "query");

    std::vector<SearchHit> hits;
    hits.reserve(entries_.size());
    for (const auto& e : entries_) {
        if (filter && !filter(e)) continue;
        hits.push_back({e.entry_id, std::clamp(dot(q, e.embedding), -1.0, 1.0)});
    }
    const auto by_rank = [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.entry_id < b.entry_id;
    };
    const auto k = std::min(n, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), by_rank);
    hits.resize(k);
    return hits;
}

void FlatIndex::save(const std::filesystem::path& base) const {
    std::string payload;
    payload.reserve(entries_.size() * dimension_ * 8);
    for (const auto& e : entries_) {
        for (double x : e.embedding) put_le(payload, std::bit_cast<std::uint64_t>(x));
    }
    const auto digest = sha256(payload);

    std::string bin(kMagic, sizeof(kMagic));
    put_le(bin, kFormatVersion);
    put_le(bin, dimension_);
    put_le(bin, static_cast<std::uint64_t>(entries_.size()));
    bin.append(reinterpret_cast<const char*>(digest.data()), digest.size());
    bin += payload;

    json entries = json::array();
    for (const auto& e : entries_) {
        entries.push_back({{"entry_id", e.entry_id},
                           {"kind", std::string(to_string(e.kind))},
                           {"story_id", e.story_id},
                           {"episode_index", e.episode_index}});
    }
    const json meta = {{"format", "score-flat-index"},
                       {"version", kFormatVersion},
                       {"dimension", dimension_},
                       {"count", entries_.size()},
                       {"checksum", to_hex(digest)},
                       {"entries", std::move(entries)}};

    write_if_changed(with_suffix(base, ".vec"), bin);
    write_if_changed(with_suffix(base, ".meta.json"), meta.dump(2));
}

FlatIndex FlatIndex::load(const std::filesystem::path& base) {
    const auto vec_path = with_suffix(base, ".vec");
    const auto bin = read_file(vec_path);
    const auto fail = [&](const std::string& why) {
        return Error(ErrorKind::parse, vec_path.string() + ": " + why);
    };

    if (bin.size() < kHeaderSize) throw fail("truncated header");
    if (std::memcmp(bin.data(), kMagic, sizeof(kMagic)) != 0) throw fail("bad magic");
    const auto version = get_le<std::uint32_t>(bin, 8);
    if (version != kFormatVersion) throw fail("version mismatch: file has " + std::to_string(version));
    const auto dim = get_le<std::uint32_t>(bin, 12);
    const auto count = get_le<std::uint64_t>(bin, 16);
    if (dim == 0) throw fail("zero dimension");
    const std::size_t payload_size = static_cast<std::size_t>(count) * dim * 8;
    if (count > (bin.size() / 8) || bin.size() - kHeaderSize != payload_size) throw fail("truncated payload");
    const std::string_view payload(bin.data() + kHeaderSize, payload_size);
    const auto digest = sha256(payload);
    if (std::memcmp(digest.data(), bin.data() + 24, digest.size()) != 0) throw fail("checksum failure");

    json meta;
    try {
        meta = json::parse(read_file(with_suffix(base, ".meta.json")));
    } catch (const json::parse_error& e) {
        throw ParseError("index metadata: malformed JSON", e.byte);
    }
    try {
        if (meta.at("version").get<std::uint32_t>() != version) throw fail("metadata version mismatch");
        if (meta.at("dimension").get<std::uint32_t>() != dim) throw fail("metadata dimension mismatch");
        if (meta.at("checksum").get<std::string>() != to_hex(digest)) throw fail("metadata checksum mismatch");
        const auto& entries = meta.at("entries");
        if (entries.size() != count) throw fail("metadata entry count mismatch");

        FlatIndex index(dim);
        index.entries_.reserve(count);
        std::unordered_set<std::string> ids;
        std::size_t at = kHeaderSize;
        for (const auto& ej : entries) {
            IndexEntry e;
            e.entry_id = ej.at("entry_id").get<std::string>();
            if (!ids.insert(e.entry_id).second) throw fail("duplicate entry_id in metadata");
            auto kind = parse_entry_kind(ej.at("kind").get<std::string>());
            if (!kind) throw fail("unknown entry kind");
            e.kind = *kind;
            e.story_id = ej.at("story_id").get<std::string>();
            e.episode_index = ej.at("episode_index").get<EpisodeIndex>();
            e.embedding.resize(dim);
            for (auto& x : e.embedding) {
                x = std::bit_cast<double>(get_le<std::uint64_t>(bin, at));
                at += 8;
            }
            index.entries_.push_back(std::move(e));
        }
        index.frozen_ = true;
        return index;
    } catch (const json::exception& e) {
        throw fail(std::string("bad metadata: ") + e.what());
    }
}

}  // namespace score
