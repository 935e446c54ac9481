#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "score/error.hpp"
#include "score/prompts.hpp"
#include "score/vector_index.hpp"

namespace score {

enum class BackendKind { remote, mock };
enum class CacheMode { off, record, replay };

std::string_view to_string(BackendKind k);
std::string_view to_string(CacheMode m);
std::optional<BackendKind> parse_backend_kind(std::string_view s);
std::optional<CacheMode> parse_cache_mode(std::string_view s);

struct GatewayConfig {
    BackendKind backend = BackendKind::mock;
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model_name = "mock-narrative-1";
    /// Empty means "same as model_name".
    std::string embedding_model;
    std::string sentiment_model;
    std::uint32_t embed_dim = 512;
    std::uint32_t max_parallel = 4;
    std::chrono::milliseconds timeout{60'000};
    std::uint32_t max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::uint32_t embed_batch_limit = 64;
    CacheMode cache_mode = CacheMode::off;
    std::filesystem::path cache_dir = "cache";

    const std::string& embedding_model_or_default() const {
        return embedding_model.empty() ? model_name : embedding_model;
    }
    const std::string& sentiment_model_or_default() const {
        return sentiment_model.empty() ? model_name : sentiment_model;
    }

    /// Throws ValidationError on out-of-range values.
    void validate() const;
};

/// Serialized without cache_dir, which is a property of the machine, not of the run.
nlohmann::json gateway_config_to_json(const GatewayConfig& c);
/// Overlays the keys present in `j` onto `base`.
GatewayConfig gateway_config_from_json(const nlohmann::json& j, GatewayConfig base = {});

struct CompletionParams {
    double temperature = 0.0;
    std::uint32_t max_tokens = 1024;
};

struct SentimentScore {
    double value = 0.5;

    /// Throws ContractError outside [0, 1].
    static SentimentScore checked(double v);
    bool operator==(const SentimentScore&) const = default;
};

/// One capability provider. Implementations may throw TransportError; the
/// gateway owns retries, caching and the parallelism bound.
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string complete(const std::string& model, const std::string& prompt,
                                 const CompletionParams& params) = 0;
    virtual std::vector<Embedding> embed(const std::string& model, const std::vector<std::string>& texts) = 0;

    /// Backends that score sentiment without a prompt override both.
    virtual bool has_native_sentiment() const { return false; }
    virtual double native_sentiment(const std::string& /*text*/) { return 0.5; }

    /// True for deterministic rule engines (the mock); tags extracted
    /// observations as rule-based rather than model-based.
    virtual bool rule_based() const { return false; }
};

std::unique_ptr<Backend> make_backend(const GatewayConfig& config);

/// Content-addressed store: `<dir>/<first-2-hex>/<hash>.json`.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    /// SHA-256 of operation, model and the canonical (key-sorted) request body.
    static std::string key(std::string_view operation, std::string_view model, const nlohmann::json& request);

    std::optional<nlohmann::json> lookup(const std::string& key) const;
    void store(const std::string& key, std::string_view operation, std::string_view model,
               const nlohmann::json& request, const nlohmann::json& response);

    std::filesystem::path path_for(const std::string& key) const;

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

struct GatewayStats {
    std::uint64_t upstream_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t retries = 0;
    std::uint32_t peak_in_flight = 0;
};

/// Completion, embedding and sentiment behind one interface, shared across
/// threads. Serializes only the parallelism semaphore and cache writes.
class LlmGateway {
public:
    explicit LlmGateway(GatewayConfig config, PromptLibrary prompts = PromptLibrary::builtin());
    LlmGateway(GatewayConfig config, std::unique_ptr<Backend> backend,
               PromptLibrary prompts = PromptLibrary::builtin());

    /// Throws ContractError for an empty prompt, TransportError once retries
    /// are exhausted, CacheMissError in replay mode.
    std::string complete(const std::string& prompt, const CompletionParams& params = {});

    /// One embedding per text, in order. Texts must be non-empty and the batch
    /// no larger than embed_batch_limit.
    std::vector<Embedding> embed(const std::vector<std::string>& texts);

    /// Remote backends are prompted for a single decimal; replies outside
    /// [0, 1] are clamped, an unparseable reply is retried once and then
    /// raises ModelReplyError (stage "sentiment").
    SentimentScore score_sentiment(const std::string& text);

    const GatewayConfig& config() const { return config_; }
    const PromptLibrary& prompts() const { return prompts_; }
    bool rule_based() const { return backend_ ? backend_->rule_based() : false; }

    GatewayStats stats() const;

private:
    template <typename Fn>
    auto call_upstream(Fn&& fn) -> decltype(fn());

    GatewayConfig config_;
    std::unique_ptr<Backend> backend_;
    PromptLibrary prompts_;
    std::optional<ResponseCache> cache_;
    std::counting_semaphore<1024> slots_;

    std::atomic<std::uint64_t> upstream_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> retries_{0};
    std::atomic<std::uint32_t> in_flight_{0};
    std::atomic<std::uint32_t> peak_in_flight_{0};
};

/// Parses a sentiment reply: the first decimal number in the text.
std::optional<double> parse_sentiment_reply(std::string_view reply);

/// Extracts the first balanced JSON object from free text (models sometimes
/// wrap JSON in prose or code fences).
std::optional<nlohmann::json> extract_json_object(std::string_view text);

/// Sends `prompt`, parses the reply as a JSON object and converts it with
/// `convert`. When parsing or conversion fails, sends one repair prompt; a
/// second failure throws ModelReplyError for `stage` carrying the raw reply.
/// `convert` signals problems by throwing std::exception.
template <typename Convert>
auto complete_structured(LlmGateway& gateway, const std::string& prompt, const std::string& stage,
                         Convert&& convert) -> decltype(convert(std::declval<const nlohmann::json&>())) {
    std::string reply = gateway.complete(prompt);
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (auto j = extract_json_object(reply)) {
            try {
                return convert(*j);
            } catch (const std::exception& e) {
                problem = e.what();
            }
        } else {
            problem = "reply is not a JSON object";
        }
        if (attempt == 0) {
            const nlohmann::json input = {{"stage", stage}, {"reply", reply}};
            reply = gateway.complete(gateway.prompts().render(
                "repair_json", {{"problem", problem}, {"input", input.dump(2)}}));
        }
    }
    throw ModelReplyError(stage, problem, reply);
}

}  // namespace score
