#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coi/error.hpp"

namespace coi {

// ---------------------------------------------------------------------------
// Requests and responses
// ---------------------------------------------------------------------------

enum class Role { System, User, Assistant };

std::string_view to_string(Role r) noexcept;
Role parse_role(std::string_view text);

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

enum class SamplingStrategy { Greedy, Nucleus };

struct SamplingParams {
    SamplingStrategy strategy = SamplingStrategy::Greedy;
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 512;

    static SamplingParams greedy(int max_tokens = 512) {
        return {SamplingStrategy::Greedy, 0.0, 1.0, max_tokens};
    }
    static SamplingParams nucleus(double temperature = 1.0, double top_p = 1.0, int max_tokens = 512) {
        return {SamplingStrategy::Nucleus, temperature, top_p, max_tokens};
    }

    /// Greedy is sent to providers as temperature 0.
    double effective_temperature() const noexcept {
        return strategy == SamplingStrategy::Greedy ? 0.0 : temperature;
    }

    /// Throws ConfigError unless temperature >= 0, top_p in (0,1], max_tokens > 0.
    void validate() const;

    friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

std::string_view to_string(SamplingStrategy s) noexcept;

struct CompletionRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;
    SamplingParams sampling;
};

struct CompletionResponse {
    std::string text;
    bool refusal = false;
    bool cache_hit = false;
    double latency_ms = 0.0;
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
};

/// Deterministic JSON rendering (sorted keys) of a request. Cache keys and
/// the mock's noise draws are both computed from it.
std::string canonical_request(const CompletionRequest& req);

/// SHA-256 digest of canonical_request, hex encoded.
struct CacheKey {
    std::string hex;

    static CacheKey of(const CompletionRequest& req);
    friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class BackendError : public Error {
public:
    using Error::Error;
};

class AuthError : public BackendError {
public:
    using BackendError::BackendError;
};

class RateLimitedExhausted : public BackendError {
public:
    using BackendError::BackendError;
};

class TimeoutError : public BackendError {
public:
    using BackendError::BackendError;
};

class ProviderError : public BackendError {
public:
    ProviderError(int status, std::string body_excerpt)
        : BackendError("provider returned status " + std::to_string(status) + ": " + body_excerpt),
          status_(status), body_excerpt_(std::move(body_excerpt)) {}

    int status() const noexcept { return status_; }
    const std::string& body_excerpt() const noexcept { return body_excerpt_; }

private:
    int status_;
    std::string body_excerpt_;
};

// ---------------------------------------------------------------------------
// Refusal detection
// ---------------------------------------------------------------------------

const std::vector<std::string>& default_refusal_phrases();

/// True iff text contains any phrase, case-insensitively.
bool detect_refusal(std::string_view text, std::span<const std::string> phrases);
bool detect_refusal(std::string_view text);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// A chat-completion provider. Implementations must be safe to call from
/// several threads at once.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// Calls the provider and flags refusals with this backend's phrase list.
    CompletionResponse complete(const CompletionRequest& req) const {
        CompletionResponse resp = do_complete(req);
        resp.refusal = detect_refusal(resp.text, refusal_phrases_);
        return resp;
    }

    const std::vector<std::string>& refusal_phrases() const noexcept { return refusal_phrases_; }
    void set_refusal_phrases(std::vector<std::string> phrases) { refusal_phrases_ = std::move(phrases); }

protected:
    ChatBackend() : refusal_phrases_(default_refusal_phrases()) {}

private:
    virtual CompletionResponse do_complete(const CompletionRequest& req) const = 0;

    std::vector<std::string> refusal_phrases_;
};

struct MockOptions {
    /// Probability that the emitted valence is replaced by one of the two
    /// other labels, chosen uniformly.
    double noise = 0.0;
    std::uint64_t seed = 0;
};

/// Rule-based stand-in for an LLM. Reads the stage marker of the latest
/// user message, finds the dialogue it is asked about, and answers from a
/// fixed cue table. A pure function of (request, options).
class MockBackend final : public ChatBackend {
public:
    explicit MockBackend(MockOptions options = {}) : options_(options) {}

    struct CueRule {
        std::string_view cue;
        std::string_view valence;  // "positive" | "negative"
    };
    static std::span<const CueRule> cue_rules() noexcept;

private:
    CompletionResponse do_complete(const CompletionRequest& req) const override;

    MockOptions options_;
};

/// Exposed for tests.
std::string mock_complete(const CompletionRequest& req, const MockOptions& options = {});

/// Wraps a backend and replies with a refusal for requests matching a predicate.
class FaultInjectingBackend final : public ChatBackend {
public:
    using Predicate = std::function<bool(const CompletionRequest&)>;

    FaultInjectingBackend(std::shared_ptr<const ChatBackend> inner, Predicate refuse_when,
                          std::string refusal_text = "I cannot assist with that request.")
        : inner_(std::move(inner)), refuse_when_(std::move(refuse_when)),
          refusal_text_(std::move(refusal_text)) {}

private:
    CompletionResponse do_complete(const CompletionRequest& req) const override;

    std::shared_ptr<const ChatBackend> inner_;
    Predicate refuse_when_;
    std::string refusal_text_;
};

/// Appends a newline if the file ends mid-record, so the next append starts
/// on a fresh line. The torn fragment is then skipped by readers.
void terminate_torn_line(const std::filesystem::path& file);

/// Append-only on-disk response log (responses.jsonl) keyed by CacheKey.
/// A torn final line, as left by a crash, is ignored on load.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<std::string> lookup(const CacheKey& key) const;
    void store(const CacheKey& key, const std::string& text);
    std::size_t size() const;

    const std::filesystem::path& file() const noexcept { return file_; }

private:
    std::filesystem::path file_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::string> entries_;
};

class CachingBackend final : public ChatBackend {
public:
    CachingBackend(std::shared_ptr<const ChatBackend> inner, std::shared_ptr<ResponseCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)) {}

private:
    CompletionResponse do_complete(const CompletionRequest& req) const override;

    std::shared_ptr<const ChatBackend> inner_;
    std::shared_ptr<ResponseCache> cache_;
};

struct HttpOptions {
    /// e.g. "https://api.openai.com/v1"; requests go to <base_url>/chat/completions.
    std::string base_url;
    std::string api_key;
    std::chrono::milliseconds timeout{60000};
    int max_retries = 5;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{30000};
    double requests_per_minute = 0.0;  // 0 = unlimited
    int max_in_flight = 4;
};

/// OpenAI-compatible chat completions client.
class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(HttpOptions options);
    ~HttpBackend() override;

    /// JSON body sent for a request.
    static std::string request_body(const CompletionRequest& req);

private:
    CompletionResponse do_complete(const CompletionRequest& req) const override;
    void pace() const;

    HttpOptions options_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    mutable std::mutex pace_mutex_;
    mutable std::chrono::steady_clock::time_point next_slot_{};
    mutable std::counting_semaphore<> in_flight_;
};

}  // namespace coi
