#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <atomic>
#include <thread>

#include "score/error.hpp"
#include "score/llm_gateway.hpp"
#include "score/mock_model.hpp"
#include "score/parallel.hpp"
#include "score/vector_index.hpp"
#include "support.hpp"

using namespace score;
using nlohmann::json;
using score::testing::mock_config;
using score::testing::TempDir;

namespace {

/// Counts calls and can fail the first few with a transport error.
class ProbeBackend final : public Backend {
public:
    std::atomic<int> completes{0};
    std::atomic<int> embeds{0};
    std::atomic<int> fail_first{0};
    std::optional<int> fail_status;
    std::chrono::milliseconds delay{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};

    std::string complete(const std::string&, const std::string& prompt, const CompletionParams&) override {
        const int now = ++in_flight;
        for (int p = peak.load(); now > p && !peak.compare_exchange_weak(p, now);) {
        }
        if (delay.count()) std::this_thread::sleep_for(delay);
        --in_flight;
        if (completes++ < fail_first) throw TransportError("injected", fail_status);
        return "echo:" + std::to_string(prompt.size());
    }
    std::vector<Embedding> embed(const std::string&, const std::vector<std::string>& texts) override {
        ++embeds;
        std::vector<Embedding> out;
        for (const auto& t : texts) out.push_back(mock::hashed_embedding(t, 8));
        return out;
    }
};

GatewayConfig probe_config(CacheMode mode = CacheMode::off, std::filesystem::path dir = "cache") {
    auto c = mock_config(mode, std::move(dir));
    c.embed_dim = 8;
    c.initial_backoff = std::chrono::milliseconds(1);
    return c;
}

}  // namespace

TEST_CASE("mock completion is a deterministic function of the prompt") {
    LlmGateway a(mock_config()), b(mock_config());
    CHECK(a.complete("hello there") == b.complete("hello there"));
    CHECK(a.complete("hello there") != a.complete("hello again"));
    CHECK_THROWS_AS(a.complete("   "), ContractError);
}

TEST_CASE("record mode calls upstream once per distinct request") {
    TempDir dir;
    auto backend = std::make_unique<ProbeBackend>();
    auto* probe = backend.get();
    LlmGateway gw(probe_config(CacheMode::record, dir.path()), std::move(backend));
    const auto first = gw.complete("same prompt");
    const auto second = gw.complete("same prompt");
    CHECK(first == second);
    CHECK(probe->completes == 1);
    CHECK(gw.stats().cache_hits == 1);

    gw.embed({"alpha", "beta"});
    gw.embed({"beta", "gamma"});
    CHECK(probe->embeds == 2);  // second batch only sends "gamma"
}

TEST_CASE("replay serves recorded replies and misses without upstream calls") {
    TempDir dir;
    {
        LlmGateway recorder(probe_config(CacheMode::record, dir.path()), std::make_unique<ProbeBackend>());
        recorder.complete("recorded");
    }
    auto backend = std::make_unique<ProbeBackend>();
    auto* probe = backend.get();
    LlmGateway replay(probe_config(CacheMode::replay, dir.path()), std::move(backend));
    CHECK(replay.complete("recorded") == "echo:8");
    CHECK_THROWS_WITH_AS(replay.complete("never seen"), doctest::Contains("uncached request"), CacheMissError);
    CHECK_THROWS_AS(replay.embed({"never seen"}), CacheMissError);
    CHECK(probe->completes == 0);
    CHECK(probe->embeds == 0);
}

TEST_CASE("replay with an empty cache makes no upstream calls") {
    TempDir dir;
    auto backend = std::make_unique<ProbeBackend>();
    auto* probe = backend.get();
    LlmGateway gw(probe_config(CacheMode::replay, dir.path()), std::move(backend));
    CHECK_THROWS_AS(gw.complete("anything"), CacheMissError);
    CHECK(probe->completes == 0);
    CHECK(gw.stats().upstream_calls == 0);
}

TEST_CASE("transient transport errors are retried with backoff") {
    SUBCASE("recovers within the retry budget") {
        auto backend = std::make_unique<ProbeBackend>();
        backend->fail_first = 2;
        backend->fail_status = 503;
        auto* probe = backend.get();
        LlmGateway gw(probe_config(), std::move(backend));
        CHECK(gw.complete("x") == "echo:1");
        CHECK(probe->completes == 3);
        CHECK(gw.stats().retries == 2);
    }
    SUBCASE("gives up after max_retries") {
        auto backend = std::make_unique<ProbeBackend>();
        backend->fail_first = 100;
        auto* probe = backend.get();
        auto cfg = probe_config();
        cfg.max_retries = 3;
        LlmGateway gw(cfg, std::move(backend));
        CHECK_THROWS_AS(gw.complete("x"), TransportError);
        CHECK(probe->completes == 4);
    }
    SUBCASE("client errors are not retried") {
        auto backend = std::make_unique<ProbeBackend>();
        backend->fail_first = 100;
        backend->fail_status = 401;
        auto* probe = backend.get();
        LlmGateway gw(probe_config(), std::move(backend));
        CHECK_THROWS_AS(gw.complete("x"), TransportError);
        CHECK(probe->completes == 1);
    }
}

TEST_CASE("in-flight requests never exceed max_parallel") {
    auto backend = std::make_unique<ProbeBackend>();
    backend->delay = std::chrono::milliseconds(5);
    auto* probe = backend.get();
    auto cfg = probe_config();
    cfg.max_parallel = 3;
    LlmGateway gw(cfg, std::move(backend));
    parallel_for(40, 12, [&](std::size_t i) { gw.complete("prompt " + std::to_string(i)); });
    CHECK(probe->peak <= 3);
    CHECK(gw.stats().peak_in_flight <= 3);
    CHECK(probe->completes == 40);
}

TEST_CASE("embedding contract") {
    LlmGateway gw(mock_config());
    const auto a = gw.embed({"abc"});
    CHECK(a == gw.embed({"abc"}));
    CHECK(a[0].size() == gw.config().embed_dim);
    CHECK_THROWS_AS(gw.embed({""}), ContractError);
    auto cfg = mock_config();
    cfg.embed_batch_limit = 2;
    LlmGateway small(cfg);
    CHECK_THROWS_AS(small.embed({"a", "b", "c"}), ContractError);
}

TEST_CASE("hashed embeddings rank paraphrases above unrelated sentences") {
    const std::vector<std::pair<std::string, std::string>> related = {
        {"The old sword rested in the castle hall.", "The old sword rested in the great castle hall."},
        {"Mira carried the lantern through the dark forest.", "Mira carried the lantern into the dark forest."},
        {"The ship sailed north under a grey sky.", "The ship sailed north beneath a grey sky."},
        {"Tomas found the map hidden under the floor.", "Tomas found the map hidden beneath the floor."},
        {"The crown was kept in a locked chest.", "The crown was kept inside a locked chest."},
    };
    LlmGateway gw(mock_config());
    for (std::size_t i = 0; i < related.size(); ++i) {
        const auto e = gw.embed({related[i].first, related[i].second, related[(i + 1) % related.size()].second});
        INFO("pair ", i);
        CHECK(cosine(e[0], e[1]) > cosine(e[0], e[2]));
        CHECK(cosine(e[0], e[1]) > 0.5);
    }
}

TEST_CASE("mock sentiment follows the lexicon") {
    LlmGateway gw(mock_config());
    CHECK(gw.score_sentiment("joy hope love").value > 0.5);
    CHECK(gw.score_sentiment("grief fear despair").value < 0.5);
    CHECK(gw.score_sentiment("The table stood in the room.").value == 0.5);
    // (3 - 0) / (3 + 0 + 1) = 0.75 on [-1, 1], so 0.875 on [0, 1].
    CHECK(mock::lexicon_sentiment("joy hope love") == doctest::Approx(0.875).epsilon(1e-12));
    CHECK_THROWS_AS(gw.score_sentiment(""), ContractError);
}

TEST_CASE("sentiment reply parsing") {
    CHECK(parse_sentiment_reply("0.73") == doctest::Approx(0.73));
    CHECK(parse_sentiment_reply("Score: 0.2 overall") == doctest::Approx(0.2));
    CHECK_FALSE(parse_sentiment_reply("no idea").has_value());
}

TEST_CASE("JSON object extraction tolerates prose and fences") {
    CHECK(extract_json_object("```json\n{\"a\": 1}\n```") == json{{"a", 1}});
    CHECK(extract_json_object("Sure! {\"b\": \"}\"} done") == json{{"b", "}"}});
    CHECK_FALSE(extract_json_object("nothing here").has_value());
}

TEST_CASE("structured replies get one repair attempt") {
    class Scripted final : public Backend {
    public:
        std::vector<std::string> replies;
        std::size_t next = 0;
        std::string complete(const std::string&, const std::string&, const CompletionParams&) override {
            return replies.at(std::min(next++, replies.size() - 1));
        }
        std::vector<Embedding> embed(const std::string&, const std::vector<std::string>&) override { return {}; }
    };
    const auto to_int = [](const json& j) { return j.at("n").get<int>(); };

    auto fixed = std::make_unique<Scripted>();
    fixed->replies = {"not json", "{\"n\": 4}"};
    LlmGateway ok(mock_config(), std::move(fixed));
    CHECK(complete_structured(ok, "q", "evaluation", to_int) == 4);

    auto broken = std::make_unique<Scripted>();
    broken->replies = {"not json", "still not json"};
    LlmGateway bad(mock_config(), std::move(broken));
    try {
        complete_structured(bad, "q", "evaluation", to_int);
        FAIL("expected ModelReplyError");
    } catch (const ModelReplyError& e) {
        CHECK(e.stage() == "evaluation");
        CHECK(e.raw_reply() == "still not json");
    }
}

TEST_CASE("remote backend speaks the chat and embeddings wire format") {
    httplib::Server server;
    std::atomic<int> chat_calls{0};
    json last_chat;
    std::string auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        if (chat_calls++ == 0) {
            res.status = 503;
            return;
        }
        last_chat = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        const auto& content = last_chat["messages"][0]["content"].get<std::string>();
        const std::string reply = content.find("### task: score_sentiment") != std::string::npos ? "0.73" : "pong";
        res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}}.dump(),
                        "application/json");
    });
    server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = json::parse(req.body);
        json data = json::array();
        // Out of order on purpose; the client sorts by index.
        for (int i = static_cast<int>(body["input"].size()) - 1; i >= 0; --i) {
            data.push_back({{"index", i}, {"embedding", {double(i + 1), 0.0, 1.0}}});
        }
        res.set_content(json{{"data", data}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("SCORE_API_KEY", "test-key", 1);
    GatewayConfig cfg;
    cfg.backend = BackendKind::remote;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
    cfg.model_name = "m1";
    cfg.embedding_model = "e1";
    cfg.embed_dim = 3;
    cfg.initial_backoff = std::chrono::milliseconds(1);
    {
        LlmGateway gw(cfg);
        CHECK(gw.complete("ping") == "pong");
        CHECK(chat_calls == 2);
        CHECK(gw.stats().retries == 1);
        CHECK(last_chat["model"] == "m1");
        CHECK(last_chat["messages"][0]["role"] == "user");
        CHECK(last_chat["messages"][0]["content"] == "ping");
        CHECK(last_chat["temperature"] == 0.0);
        CHECK(auth == "Bearer test-key");

        const auto e = gw.embed({"a", "b"});
        REQUIRE(e.size() == 2);
        CHECK(e[0][0] == 1.0);
        CHECK(e[1][0] == 2.0);

        CHECK(gw.score_sentiment("a calm day").value == doctest::Approx(0.73));
    }
    ::unsetenv("SCORE_API_KEY");
    server.stop();
    worker.join();
}

TEST_CASE("unreachable remote backend surfaces a transport error") {
    GatewayConfig cfg;
    cfg.backend = BackendKind::remote;
    cfg.base_url = "http://127.0.0.1:1/v1";
    cfg.max_retries = 1;
    cfg.initial_backoff = std::chrono::milliseconds(1);
    cfg.timeout = std::chrono::milliseconds(500);
    LlmGateway gw(cfg);
    CHECK_THROWS_AS(gw.complete("hello"), TransportError);
}

TEST_CASE("gateway config validation and JSON overlay") {
    GatewayConfig c;
    c.max_parallel = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    const auto overlaid = gateway_config_from_json(json{{"model_name", "x"}, {"max_parallel", 2}});
    CHECK(overlaid.model_name == "x");
    CHECK(overlaid.max_parallel == 2);
    CHECK(overlaid.embed_dim == GatewayConfig{}.embed_dim);
    CHECK_FALSE(gateway_config_to_json(c).contains("cache_dir"));
}
