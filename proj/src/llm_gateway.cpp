#include "score/llm_gateway.hpp"

#include <charconv>
#include <cmath>
#include <iostream>
#include <thread>

#include "score/error.hpp"
#include "score/file_io.hpp"
#include "score/hash.hpp"
#include "score/text.hpp"

namespace score {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(BackendKind k) { return k == BackendKind::remote ? "remote" : "mock"; }

std::string_view to_string(CacheMode m) {
    switch (m) {
        case CacheMode::record: return "record";
        case CacheMode::replay: return "replay";
        case CacheMode::off: break;
    }
    return "off";
}

std::optional<BackendKind> parse_backend_kind(std::string_view s) {
    if (s == "remote") return BackendKind::remote;
    if (s == "mock") return BackendKind::mock;
    return std::nullopt;
}

std::optional<CacheMode> parse_cache_mode(std::string_view s) {
    if (s == "off") return CacheMode::off;
    if (s == "record") return CacheMode::record;
    if (s == "replay") return CacheMode::replay;
    return std::nullopt;
}

void GatewayConfig::validate() const {
    if (model_name.empty()) throw ValidationError("gateway.model_name", "must be non-empty");
    if (embed_dim == 0) throw ValidationError("gateway.embed_dim", "must be positive");
    if (max_parallel == 0 || max_parallel > 1024) throw ValidationError("gateway.max_parallel", "must be in [1, 1024]");
    if (embed_batch_limit == 0) throw ValidationError("gateway.embed_batch_limit", "must be positive");
    if (timeout.count() <= 0) throw ValidationError("gateway.timeout_ms", "must be positive");
    if (initial_backoff.count() < 0) throw ValidationError("gateway.initial_backoff_ms", "must be nonnegative");
    if (backend == BackendKind::remote && base_url.empty()) {
        throw ValidationError("gateway.base_url", "required for the remote backend");
    }
}

json gateway_config_to_json(const GatewayConfig& c) {
    return {
        {"backend", std::string(to_string(c.backend))},
        {"base_url", c.base_url},
        {"model_name", c.model_name},
        {"embedding_model", c.embedding_model},
        {"sentiment_model", c.sentiment_model},
        {"embed_dim", c.embed_dim},
        {"max_parallel", c.max_parallel},
        {"timeout_ms", c.timeout.count()},
        {"max_retries", c.max_retries},
        {"initial_backoff_ms", c.initial_backoff.count()},
        {"embed_batch_limit", c.embed_batch_limit},
        {"cache_mode", std::string(to_string(c.cache_mode))},
    };
}

GatewayConfig gateway_config_from_json(const json& j, GatewayConfig c) {
    if (!j.is_object()) throw ValidationError("gateway", "expected object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "backend") {
                auto b = parse_backend_kind(v.get<std::string>());
                if (!b) throw ValidationError("gateway.backend", "expected remote|mock");
                c.backend = *b;
            } else if (key == "base_url") {
                c.base_url = v.get<std::string>();
            } else if (key == "model_name") {
                c.model_name = v.get<std::string>();
            } else if (key == "embedding_model") {
                c.embedding_model = v.get<std::string>();
            } else if (key == "sentiment_model") {
                c.sentiment_model = v.get<std::string>();
            } else if (key == "embed_dim") {
                c.embed_dim = v.get<std::uint32_t>();
            } else if (key == "max_parallel") {
                c.max_parallel = v.get<std::uint32_t>();
            } else if (key == "timeout_ms") {
                c.timeout = std::chrono::milliseconds(v.get<std::int64_t>());
            } else if (key == "max_retries") {
                c.max_retries = v.get<std::uint32_t>();
            } else if (key == "initial_backoff_ms") {
                c.initial_backoff = std::chrono::milliseconds(v.get<std::int64_t>());
            } else if (key == "embed_batch_limit") {
                c.embed_batch_limit = v.get<std::uint32_t>();
            } else if (key == "cache_mode") {
                auto m = parse_cache_mode(v.get<std::string>());
                if (!m) throw ValidationError("gateway.cache_mode", "expected off|record|replay");
                c.cache_mode = *m;
            } else {
                throw ValidationError("gateway." + key, "unknown field");
            }
        }
    } catch (const json::type_error& e) {
        throw ValidationError("gateway", std::string("wrong value type: ") + e.what());
    }
    c.validate();
    return c;
}

SentimentScore SentimentScore::checked(double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("sentiment must lie in [0, 1]");
    return SentimentScore{v};
}

// ---------------------------------------------------------------------------
// ResponseCache

std::string ResponseCache::key(std::string_view operation, std::string_view model, const json& request) {
    std::string material;
    material += operation;
    material += '\n';
    material += model;
    material += '\n';
    material += request.dump();
    return sha256_hex(material);
}

fs::path ResponseCache::path_for(const std::string& key) const { return dir_ / key.substr(0, 2) / (key + ".json"); }

std::optional<json> ResponseCache::lookup(const std::string& key) const {
    const auto path = path_for(key);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) return std::nullopt;
    try {
        auto entry = json::parse(read_file(path));
        if (entry.value("key", "") != key || !entry.contains("response")) return std::nullopt;
        return entry.at("response");
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

void ResponseCache::store(const std::string& key, std::string_view operation, std::string_view model,
                          const json& request, const json& response) {
    const json entry = {{"key", key},
                        {"operation", operation},
                        {"model", model},
                        {"request_digest", sha256_hex(request.dump())},
                        {"request", request},
                        {"response", response}};
    std::lock_guard lock(mutex_);
    write_if_changed(path_for(key), entry.dump(2));
}

// ---------------------------------------------------------------------------
// LlmGateway

namespace {

class InFlightGuard {
public:
    InFlightGuard(std::counting_semaphore<1024>& slots, std::atomic<std::uint32_t>& in_flight,
                  std::atomic<std::uint32_t>& peak)
        : slots_(slots), in_flight_(in_flight) {
        slots_.acquire();
        const auto now = in_flight_.fetch_add(1) + 1;
        auto prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
    }
    ~InFlightGuard() {
        in_flight_.fetch_sub(1);
        slots_.release();
    }
    InFlightGuard(const InFlightGuard&) = delete;
    InFlightGuard& operator=(const InFlightGuard&) = delete;

private:
    std::counting_semaphore<1024>& slots_;
    std::atomic<std::uint32_t>& in_flight_;
};

bool retryable(const TransportError& e) {
    const auto status = e.status();
    return !status || *status >= 500 || *status == 429 || *status == 408;
}

}  // namespace

LlmGateway::LlmGateway(GatewayConfig config, PromptLibrary prompts)
    : LlmGateway(config, make_backend(config), std::move(prompts)) {}

LlmGateway::LlmGateway(GatewayConfig config, std::unique_ptr<Backend> backend, PromptLibrary prompts)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      prompts_(std::move(prompts)),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::uint32_t>(1, std::min<std::uint32_t>(config_.max_parallel, 1024)))) {
    config_.validate();
    if (!backend_) throw ContractError("gateway needs a backend");
    if (config_.cache_mode != CacheMode::off) cache_.emplace(config_.cache_dir);
}

template <typename Fn>
auto LlmGateway::call_upstream(Fn&& fn) -> decltype(fn()) {
    InFlightGuard guard(slots_, in_flight_, peak_in_flight_);
    auto backoff = config_.initial_backoff;
    for (std::uint32_t attempt = 0;; ++attempt) {
        upstream_calls_.fetch_add(1);
        try {
            return fn();
        } catch (const TransportError& e) {
            if (attempt >= config_.max_retries || !retryable(e)) throw;
            retries_.fetch_add(1);
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

std::string LlmGateway::complete(const std::string& prompt, const CompletionParams& params) {
    if (text::trim(prompt).empty()) throw ContractError("complete: empty prompt");
    const auto& model = config_.model_name;
    const json request = {{"prompt", prompt}, {"temperature", params.temperature}, {"max_tokens", params.max_tokens}};

    std::string key;
    if (cache_) {
        key = ResponseCache::key("complete", model, request);
        if (auto hit = cache_->lookup(key)) {
            cache_hits_.fetch_add(1);
            return hit->at("text").get<std::string>();
        }
        if (config_.cache_mode == CacheMode::replay) throw CacheMissError(key);
    }
    auto reply = call_upstream([&] { return backend_->complete(model, prompt, params); });
    if (cache_) cache_->store(key, "complete", model, request, {{"text", reply}});
    return reply;
}

std::vector<Embedding> LlmGateway::embed(const std::vector<std::string>& texts) {
    if (texts.size() > config_.embed_batch_limit) {
        throw ContractError("embed: batch of " + std::to_string(texts.size()) + " exceeds limit " +
                            std::to_string(config_.embed_batch_limit));
    }
    for (const auto& t : texts) {
        if (text::trim(t).empty()) throw ContractError("embed: empty text");
    }
    const auto& model = config_.embedding_model_or_default();

    std::vector<Embedding> out(texts.size());
    std::vector<std::size_t> missing;
    std::vector<std::string> keys(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!cache_) {
            missing.push_back(i);
            continue;
        }
        keys[i] = ResponseCache::key("embed", model, {{"text", texts[i]}, {"dim", config_.embed_dim}});
        if (auto hit = cache_->lookup(keys[i])) {
            cache_hits_.fetch_add(1);
            out[i] = hit->at("embedding").get<Embedding>();
        } else if (config_.cache_mode == CacheMode::replay) {
            throw CacheMissError(keys[i]);
        } else {
            missing.push_back(i);
        }
    }
    if (missing.empty()) return out;

    std::vector<std::string> batch;
    batch.reserve(missing.size());
    for (auto i : missing) batch.push_back(texts[i]);
    auto vectors = call_upstream([&] { return backend_->embed(model, batch); });
    if (vectors.size() != batch.size()) {
        throw ModelReplyError("embedding", "backend returned " + std::to_string(vectors.size()) +
                                               " embeddings for " + std::to_string(batch.size()) + " inputs", "");
    }
    for (std::size_t k = 0; k < missing.size(); ++k) {
        if (vectors[k].size() != config_.embed_dim) {
            throw ModelReplyError("embedding", "dimension " + std::to_string(vectors[k].size()) +
                                                   " does not match embed_dim " + std::to_string(config_.embed_dim), "");
        }
        const auto i = missing[k];
        out[i] = std::move(vectors[k]);
        if (cache_) {
            cache_->store(keys[i], "embed", model, {{"text", texts[i]}, {"dim", config_.embed_dim}},
                          {{"embedding", out[i]}});
        }
    }
    return out;
}

SentimentScore LlmGateway::score_sentiment(const std::string& text) {
    if (text::trim(text).empty()) throw ContractError("score_sentiment: empty text");
    const auto& model = config_.sentiment_model_or_default();

    // Backends with a native scorer go through the cache under their own
    // operation name; everything else is a completion.
    const json request = {{"text", text}};
    std::string key;
    if (cache_) {
        key = ResponseCache::key("sentiment", model, request);
        if (auto hit = cache_->lookup(key)) {
            cache_hits_.fetch_add(1);
            return SentimentScore::checked(hit->at("value").get<double>());
        }
    }

    if (backend_->has_native_sentiment()) {
        if (cache_ && config_.cache_mode == CacheMode::replay) throw CacheMissError(key);
        const double raw = call_upstream([&] { return backend_->native_sentiment(text); });
        const auto v = SentimentScore::checked(std::clamp(raw, 0.0, 1.0));
        if (cache_) cache_->store(key, "sentiment", model, request, {{"value", v.value}});
        return v;
    }

    const auto prompt = prompts_.render("score_sentiment", {{"input", text}});
    auto reply = complete(prompt);
    auto parsed = parse_sentiment_reply(reply);
    if (!parsed) {
        reply = complete(prompt + "\nReply with only a number between 0 and 1.");
        parsed = parse_sentiment_reply(reply);
    }
    if (!parsed) throw ModelReplyError("sentiment", "reply is not a number", reply);
    if (*parsed < 0.0 || *parsed > 1.0) {
        std::clog << "warning: sentiment reply " << *parsed << " outside [0, 1], clamped\n";
    }
    return SentimentScore{std::clamp(*parsed, 0.0, 1.0)};
}

GatewayStats LlmGateway::stats() const {
    return {upstream_calls_.load(), cache_hits_.load(), retries_.load(), peak_in_flight_.load()};
}

// ---------------------------------------------------------------------------

std::optional<double> parse_sentiment_reply(std::string_view reply) {
    for (std::size_t i = 0; i < reply.size(); ++i) {
        const char c = reply[i];
        const bool starts_number = (c >= '0' && c <= '9') ||
                                   ((c == '-' || c == '.') && i + 1 < reply.size() && reply[i + 1] >= '0' &&
                                    reply[i + 1] <= '9');
        if (!starts_number) continue;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(reply.data() + i, reply.data() + reply.size(), v);
        if (ec == std::errc() && std::isfinite(v)) return v;
        return std::nullopt;
    }
    return std::nullopt;
}

std::optional<json> extract_json_object(std::string_view text) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}' && --depth == 0) {
                try {
                    auto j = json::parse(text.substr(start, i - start + 1));
                    if (j.is_object()) return j;
                } catch (const json::parse_error&) {
                }
                break;
            }
        }
    }
    return std::nullopt;
}

}  // namespace score
