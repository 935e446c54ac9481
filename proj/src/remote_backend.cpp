// OpenAI-compatible HTTP backend: POST {base_url}/chat/completions and
// POST {base_url}/embeddings, bearer auth from SCORE_API_KEY.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <cstdlib>

#include "score/error.hpp"
#include "score/llm_gateway.hpp"
#include "score/mock_model.hpp"

namespace score {

using nlohmann::json;

namespace {

struct BaseUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing slash
};

BaseUrl split_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("gateway.base_url", "missing scheme in '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    BaseUrl out;
    out.origin = url.substr(0, path_start);
    out.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

class RemoteBackend final : public Backend {
public:
    explicit RemoteBackend(const GatewayConfig& config) : config_(config), url_(split_base_url(config.base_url)) {
        if (const char* key = std::getenv("SCORE_API_KEY"); key && *key) api_key_ = key;
    }

    std::string complete(const std::string& model, const std::string& prompt, const CompletionParams& params) override {
        const json body = {{"model", model},
                           {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                           {"temperature", params.temperature},
                           {"max_tokens", params.max_tokens},
                           {"stream", false}};
        const auto reply = post("/chat/completions", body);
        try {
            const auto& content = reply.at("choices").at(0).at("message").at("content");
            return content.is_null() ? std::string() : content.get<std::string>();
        } catch (const json::exception& e) {
            throw ModelReplyError("completion", std::string("unexpected response shape: ") + e.what(), reply.dump());
        }
    }

    std::vector<Embedding> embed(const std::string& model, const std::vector<std::string>& texts) override {
        const json body = {{"model", model}, {"input", texts}};
        const auto reply = post("/embeddings", body);
        try {
            std::vector<std::pair<std::size_t, Embedding>> rows;
            for (const auto& item : reply.at("data")) {
                rows.emplace_back(item.value("index", rows.size()), item.at("embedding").get<Embedding>());
            }
            std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            std::vector<Embedding> out;
            for (auto& [_, e] : rows) out.push_back(std::move(e));
            return out;
        } catch (const json::exception& e) {
            throw ModelReplyError("embedding", std::string("unexpected response shape: ") + e.what(), reply.dump());
        }
    }

private:
    json post(const std::string& path, const json& body) {
        httplib::Client client(url_.origin);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());

        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto res = client.Post(url_.prefix + path, headers, body.dump(), "application/json");
        if (!res) throw TransportError("POST " + path + " failed: " + httplib::to_string(res.error()));
        if (res->status != 200) {
            throw TransportError("POST " + path + " returned HTTP " + std::to_string(res->status) + ": " +
                                     res->body.substr(0, 200),
                                 res->status);
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw ModelReplyError("transport", std::string("response body is not JSON: ") + e.what(), res->body);
        }
    }

    GatewayConfig config_;
    BaseUrl url_;
    std::string api_key_;
};

}  // namespace

std::unique_ptr<Backend> make_backend(const GatewayConfig& config) {
    if (config.backend == BackendKind::mock) return std::make_unique<mock::MockBackend>(config.embed_dim);
    return std::make_unique<RemoteBackend>(config);
}

}  // namespace score
