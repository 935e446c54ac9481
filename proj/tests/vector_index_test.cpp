#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "score/error.hpp"
#include "score/file_io.hpp"
#include "score/vector_index.hpp"
#include "support.hpp"

using namespace score;
using score::testing::random_unit;
using score::testing::TempDir;

namespace {

IndexEntry entry(std::string id, Embedding v, EpisodeIndex t = 0) {
    return {std::move(id), EntryKind::summary, "s", t, std::move(v)};
}

FlatIndex random_index(std::mt19937_64& rng, std::size_t n, std::uint32_t dim,
                       std::vector<std::pair<std::string, std::vector<double>>>* raw = nullptr) {
    FlatIndex index(dim);
    for (std::size_t i = 0; i < n; ++i) {
        auto v = random_unit(rng, dim);
        const auto id = "e" + std::to_string(i);
        if (raw) raw->emplace_back(id, v);
        index.add(entry(id, v, static_cast<EpisodeIndex>(i)));
    }
    return index;
}

std::vector<std::string> ids(const std::vector<SearchHit>& hits) {
    std::vector<std::string> out;
    for (const auto& h : hits) out.push_back(h.entry_id);
    return out;
}

}  // namespace

TEST_CASE("add stores unit-normalized vectors") {
    FlatIndex index(2);
    index.add(entry("a", {3.0, 4.0}));
    CHECK(index.size() == 1);
    const auto* e = index.find("a");
    REQUIRE(e);
    CHECK(e->embedding[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(e->embedding[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("invalid adds leave the index unchanged") {
    FlatIndex index(2);
    index.add(entry("a", {1.0, 0.0}));
    CHECK_THROWS_AS(index.add(entry("a", {0.0, 1.0})), ContractError);
    CHECK_THROWS_AS(index.add(entry("b", {1.0, 0.0, 0.0})), ContractError);
    CHECK_THROWS_AS(index.add(entry("c", {0.0, 0.0})), ContractError);
    CHECK_THROWS_AS(index.add(entry("d", {NAN, 1.0})), ContractError);
    CHECK(index.size() == 1);
    index.freeze();
    CHECK_THROWS_AS(index.add(entry("e", {0.0, 1.0})), ContractError);
    CHECK(index.size() == 1);
}

TEST_CASE("search on an empty index is an explicit error") {
    FlatIndex index(2);
    CHECK_THROWS_WITH(index.search_top_n(std::vector<double>{1.0, 0.0}, 3), doctest::Contains("index empty"));
}

TEST_CASE("self-similarity and orthogonal queries") {
    FlatIndex index(3);
    index.add(entry("x", {1.0, 2.0, 0.0}));
    index.add(entry("y", {2.0, -1.0, 0.0}));
    const auto self = index.search_top_n(std::vector<double>{1.0, 2.0, 0.0}, 2);
    CHECK(self[0].entry_id == "x");
    CHECK(self[0].score == doctest::Approx(1.0).epsilon(1e-9));
    const auto ortho = index.search_top_n(std::vector<double>{0.0, 0.0, 5.0}, 2);
    for (const auto& h : ortho) CHECK(std::abs(h.score) <= 1e-9);
    // Ties break by entry id.
    CHECK(ids(ortho) == std::vector<std::string>{"x", "y"});
}

TEST_CASE("n larger than the index returns every entry, a filter narrows the scan") {
    std::mt19937_64 rng(3);
    auto index = random_index(rng, 10, 8);
    const auto q = random_unit(rng, 8);
    CHECK(index.search_top_n(q, 50).size() == 10);
    const auto even = index.search_top_n(q, 50, [](const IndexEntry& e) { return e.episode_index % 2 == 0; });
    CHECK(even.size() == 5);
}

TEST_CASE("top-10 over 1000 random entries equals the full-scan sort") {
    std::mt19937_64 rng(2024);
    std::vector<std::pair<std::string, std::vector<double>>> raw;
    const auto index = random_index(rng, 1000, 32, &raw);
    for (int q = 0; q < 100; ++q) {
        const auto query = random_unit(rng, 32);
        REQUIRE(ids(index.search_top_n(query, 10)) == oracle::top_n(raw, query, 10));
    }
}

TEST_CASE("cosine properties over random pairs") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int i = 0; i < 10000; ++i) {
        const auto x = random_unit(rng, 16);
        const auto y = random_unit(rng, 16);
        const double c = cosine(x, y);
        REQUIRE(std::abs(c - cosine(y, x)) <= 1e-12);
        REQUIRE(c >= -1.0 - 1e-9);
        REQUIRE(c <= 1.0 + 1e-9);
        std::vector<double> ax = x;
        const double a = scale(rng);
        for (auto& v : ax) v *= a;
        REQUIRE(std::abs(cosine(ax, y) - c) <= 1e-9);
    }
    const std::vector<double> v{0.3, -2.0, 7.0};
    CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> neg{-0.3, 2.0, -7.0};
    CHECK(cosine(v, neg) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS_AS(cosine(v, std::vector<double>{1.0}), ContractError);
    CHECK_THROWS_AS(cosine(v, std::vector<double>{0.0, 0.0, 0.0}), ContractError);
}

TEST_CASE("save and load round-trip with identical search results") {
    TempDir dir;
    std::mt19937_64 rng(8);
    auto index = random_index(rng, 100, 24);
    index.freeze();
    index.save(dir / "idx");
    const auto loaded = FlatIndex::load(dir / "idx");
    CHECK(loaded == index);
    CHECK(loaded.frozen());
    for (int q = 0; q < 20; ++q) {
        const auto query = random_unit(rng, 24);
        REQUIRE(loaded.search_top_n(query, 100) == index.search_top_n(query, 100));
    }
}

TEST_CASE("corrupt index files are rejected") {
    TempDir dir;
    std::mt19937_64 rng(9);
    auto index = random_index(rng, 5, 4);
    index.save(dir / "idx");
    const auto vec = dir / "idx.vec";
    const auto good = read_file(vec);

    SUBCASE("empty file") {
        write_file_atomic(vec, "");
        CHECK_THROWS_WITH_AS(FlatIndex::load(dir / "idx"), doctest::Contains("truncated header"), Error);
    }
    SUBCASE("flipped checksum byte") {
        auto bad = good;
        bad[24] = static_cast<char>(bad[24] ^ 0x01);
        write_file_atomic(vec, bad);
        CHECK_THROWS_WITH_AS(FlatIndex::load(dir / "idx"), doctest::Contains("checksum"), Error);
    }
    SUBCASE("flipped payload byte") {
        auto bad = good;
        bad[bad.size() - 3] = static_cast<char>(bad[bad.size() - 3] ^ 0x40);
        write_file_atomic(vec, bad);
        CHECK_THROWS_WITH_AS(FlatIndex::load(dir / "idx"), doctest::Contains("checksum"), Error);
    }
    SUBCASE("version bump") {
        auto bad = good;
        bad[8] = 9;
        write_file_atomic(vec, bad);
        CHECK_THROWS_WITH_AS(FlatIndex::load(dir / "idx"), doctest::Contains("version"), Error);
    }
}
