#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <thread>

#include <nlohmann/json.hpp>

#include "coi/backend.hpp"

namespace coi {

using json = nlohmann::json;

namespace {

std::string excerpt(const std::string& body) {
    constexpr std::size_t kMax = 200;
    return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

bool transient_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpBackend::HttpBackend(HttpOptions options)
    : options_(std::move(options)), in_flight_(std::max(1, options_.max_in_flight)) {
    const auto scheme_end = options_.base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint must start with http:// or https://: " + options_.base_url);
    }
    const auto path_begin = options_.base_url.find('/', scheme_end + 3);
    scheme_host_port_ = options_.base_url.substr(0, path_begin);
    if (path_begin != std::string::npos) path_prefix_ = options_.base_url.substr(path_begin);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::request_body(const CompletionRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    json body = {
        {"model", req.model_id},
        {"messages", std::move(messages)},
        {"temperature", req.sampling.effective_temperature()},
        {"top_p", req.sampling.top_p},
        {"max_tokens", req.sampling.max_tokens},
    };
    return body.dump();
}

void HttpBackend::pace() const {
    if (options_.requests_per_minute <= 0.0) return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(60.0 / options_.requests_per_minute));
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(pace_mutex_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_slot_);
        next_slot_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
}

CompletionResponse HttpBackend::do_complete(const CompletionRequest& req) const {
    if (req.messages.empty()) throw BackendError("completion request has no messages");

    const std::string body = request_body(req);
    const std::string path = path_prefix_ + "/chat/completions";
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    auto backoff = options_.initial_backoff;
    int last_status = 0;
    std::string last_body;
    bool last_was_timeout = false;

    for (int attempt = 0;; ++attempt) {
        pace();
        const auto started = std::chrono::steady_clock::now();
        httplib::Result res;
        {
            in_flight_.acquire();
            struct Release {
                std::counting_semaphore<>& s;
                ~Release() { s.release(); }
            } release{in_flight_};

            httplib::Client client(scheme_host_port_);
            const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
            const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
            client.set_connection_timeout(secs.count(), usecs.count());
            client.set_read_timeout(secs.count(), usecs.count());
            client.set_write_timeout(secs.count(), usecs.count());
            res = client.Post(path, headers, body, "application/json");
        }

        if (res) {
            last_status = res->status;
            last_body = res->body;
            last_was_timeout = false;
            if (res->status == 200) {
                json j = json::parse(res->body, nullptr, false);
                if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() ||
                    j["choices"].empty()) {
                    throw ProviderError(200, "malformed response: " + excerpt(res->body));
                }
                const json& msg = j["choices"][0]["message"];
                if (!msg.is_object() || !msg.contains("content")) {
                    throw ProviderError(200, "response has no message content: " + excerpt(res->body));
                }
                CompletionResponse out;
                out.text = msg["content"].is_string() ? msg["content"].get<std::string>() : std::string();
                out.latency_ms = std::chrono::duration<double, std::milli>(
                                     std::chrono::steady_clock::now() - started).count();
                if (j.contains("usage") && j["usage"].is_object()) {
                    const json& u = j["usage"];
                    if (u.contains("prompt_tokens")) out.prompt_tokens = u["prompt_tokens"].get<int>();
                    if (u.contains("completion_tokens")) out.completion_tokens = u["completion_tokens"].get<int>();
                }
                return out;
            }
            if (res->status == 401 || res->status == 403) {
                throw AuthError("provider rejected credentials (status " +
                                std::to_string(res->status) + "): " + excerpt(res->body));
            }
            if (!transient_status(res->status)) throw ProviderError(res->status, excerpt(res->body));
        } else {
            last_status = 0;
            last_body = httplib::to_string(res.error());
            last_was_timeout = res.error() == httplib::Error::Read ||
                               res.error() == httplib::Error::Write ||
                               res.error() == httplib::Error::ConnectionTimeout;
        }

        if (attempt >= options_.max_retries) break;
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, options_.max_backoff);
    }

    if (last_status == 429) {
        throw RateLimitedExhausted("rate limited after " + std::to_string(options_.max_retries + 1) +
                                   " attempts");
    }
    if (last_status == 0 && last_was_timeout) throw TimeoutError("request timed out: " + last_body);
    throw ProviderError(last_status, excerpt(last_body));
}

}  // namespace coi
