#include <doctest.h>

#include <random>

#include "score/error.hpp"
#include "score/file_io.hpp"
#include "score/story.hpp"
#include "score/text.hpp"
#include "support.hpp"

using namespace score;
using score::testing::TempDir;

namespace {

std::string doc(const std::string& episodes, const std::string& items = "[]") {
    return R"({"story_id":"s1","title":"T","genre":"fantasy","key_items":)" + items + R"(,"episodes":)" + episodes +
           "}";
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

std::string random_unicode(std::mt19937_64& rng, std::size_t len) {
    std::uniform_int_distribution<std::uint32_t> plane(0, 3);
    std::string out = "x ";
    for (std::size_t i = 0; i < len; ++i) {
        char32_t cp = 0;
        switch (plane(rng)) {
            case 0: cp = std::uniform_int_distribution<std::uint32_t>(0x01, 0x7F)(rng); break;
            case 1: cp = std::uniform_int_distribution<std::uint32_t>(0x80, 0x7FF)(rng); break;
            case 2:
                do {
                    cp = std::uniform_int_distribution<std::uint32_t>(0x800, 0xFFFF)(rng);
                } while (cp >= 0xD800 && cp <= 0xDFFF);
                break;
            default: cp = std::uniform_int_distribution<std::uint32_t>(0x10000, 0x10FFFF)(rng); break;
        }
        append_utf8(out, cp);
    }
    return out;
}

}  // namespace

TEST_CASE("valid three-episode document parses with indices 0..2") {
    const auto s = parse_story(doc(R"([{"index":0,"text":"a b c"},{"index":1,"text":"d"},{"index":2,"text":"e f"}])"));
    REQUIRE(s.episodes.size() == 3);
    for (EpisodeIndex i = 0; i < 3; ++i) CHECK(s.episodes[i].index == i);
    CHECK(s.episodes[0].token_estimate == 4);  // ceil(3 * 4 / 3)
    CHECK(s.episodes[1].token_estimate == 2);  // ceil(4 / 3)
}

TEST_CASE("non-contiguous episode index is rejected") {
    try {
        parse_story(doc(R"([{"index":0,"text":"a"},{"index":2,"text":"b"}])"));
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("non-contiguous episode index") != std::string::npos);
    }
}

TEST_CASE("case-insensitive duplicate alias is rejected") {
    CHECK_THROWS_AS(parse_story(doc(R"([{"index":0,"text":"a"}])", R"([{"item_id":"sword","names":["sword","Sword"]}])")),
                    ValidationError);
}

TEST_CASE("schema violations name the field") {
    SUBCASE("empty episode list") {
        CHECK_THROWS_WITH_AS(parse_story(doc("[]")), doctest::Contains("episodes"), ValidationError);
    }
    SUBCASE("whitespace-only episode text") {
        CHECK_THROWS_WITH_AS(parse_story(doc(R"([{"index":0,"text":"  \n "}])")), doctest::Contains("text"),
                             ValidationError);
    }
    SUBCASE("unknown key") {
        CHECK_THROWS_AS(parse_story(doc(R"([{"index":0,"text":"a","extra":1}])")), ValidationError);
    }
    SUBCASE("unknown genre") {
        CHECK_THROWS_AS(parse_story(R"({"story_id":"s","title":"t","genre":"horror","episodes":[{"index":0,"text":"a"}]})"),
                        ValidationError);
    }
    SUBCASE("duplicate item id") {
        CHECK_THROWS_AS(parse_story(doc(R"([{"index":0,"text":"a"}])",
                                        R"([{"item_id":"x","names":["x"]},{"item_id":"x","names":["y"]}])")),
                        ValidationError);
    }
}

TEST_CASE("malformed JSON reports a byte offset") {
    try {
        parse_story(R"({"story_id": "s", )");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.byte_offset() > 0);
    }
}

TEST_CASE("serialize then parse is the identity and serialization is canonical") {
    const auto s = score::testing::make_story(
        "round", {"The sword gleamed.", "Mira lost the sword.\nShe wept."}, {{"sword", {"sword", "blade"}}});
    const auto once = serialize_story(s);
    CHECK(parse_story(once) == s);
    CHECK(serialize_story(parse_story(once)) == once);
    CHECK(serialize_story(s) == once);
    CHECK(once.back() == '}');
}

TEST_CASE("unicode episode text round-trips losslessly") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> texts;
        const auto n = 1 + trial % 4;
        for (int e = 0; e < n; ++e) texts.push_back(random_unicode(rng, 1 + (trial * 7 + e) % 60));
        const auto s = score::testing::make_story("u" + std::to_string(trial), texts);
        for (const auto& t : texts) REQUIRE(text::is_valid_utf8(t));
        const auto back = parse_story(serialize_story(s));
        REQUIRE(back == s);
    }
}

TEST_CASE("corpus loading honours corpus.json order and rejects duplicate ids") {
    TempDir dir;
    const auto a = score::testing::make_story("a", {"one"});
    const auto b = score::testing::make_story("b", {"two"});
    write_file_atomic(dir / "x.json", serialize_story(b));
    write_file_atomic(dir / "y.json", serialize_story(a));

    auto lexicographic = load_corpus(dir.path());
    REQUIRE(lexicographic.stories.size() == 2);
    CHECK(lexicographic.stories[0].story_id == "b");

    write_file_atomic(dir / "corpus.json", R"({"files": ["y.json", "x.json"]})");
    auto listed = load_corpus(dir.path());
    REQUIRE(listed.stories.size() == 2);
    CHECK(listed.stories[0].story_id == "a");

    write_file_atomic(dir / "corpus.json", R"({"files": ["y.json", "y.json"]})");
    CHECK_THROWS_AS(load_corpus(dir.path()), ValidationError);
}
