// HttpBackend against a local OpenAI-compatible stub server.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "coi/backend.hpp"

using namespace coi;
using json = nlohmann::json;

namespace {

struct Stub {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> hits{0};
    std::mutex mutex;
    json last_body;
    std::string last_auth;
    std::string last_path;
    std::function<void(int, httplib::Response&)> behave;

    Stub() {
        server.Post(R"(.*/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
            const int n = ++hits;
            {
                std::lock_guard lock(mutex);
                last_body = json::parse(req.body, nullptr, false);
                last_auth = req.get_header_value("Authorization");
                last_path = req.path;
            }
            behave(n, res);
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~Stub() {
        server.stop();
        thread.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

void reply(httplib::Response& res, const std::string& text) {
    const json body = {{"id", "x"},
                       {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}}},
                       {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 7}}}};
    res.set_content(body.dump(), "application/json");
}

HttpOptions fast(const Stub& stub) {
    HttpOptions o;
    o.base_url = stub.url();
    o.api_key = "sk-test";
    o.max_retries = 3;
    o.initial_backoff = std::chrono::milliseconds(1);
    o.max_backoff = std::chrono::milliseconds(4);
    o.timeout = std::chrono::milliseconds(2000);
    return o;
}

CompletionRequest request() {
    CompletionRequest r;
    r.model_id = "gpt-3.5-turbo";
    r.messages = {{Role::System, "sys"}, {Role::User, "[stage: zero_shot]\nhello"}};
    r.sampling = SamplingParams::nucleus(0.5, 0.8, 64);
    return r;
}

}  // namespace

TEST_CASE("successful completion") {
    Stub stub;
    stub.behave = [](int, httplib::Response& res) { reply(res, "The patient's valence should be coded as neutral."); };
    HttpBackend backend(fast(stub));
    const auto r = backend.complete(request());
    CHECK(r.text == "The patient's valence should be coded as neutral.");
    CHECK_FALSE(r.refusal);
    CHECK(r.prompt_tokens == 12);
    CHECK(r.completion_tokens == 7);
    CHECK(stub.last_path == "/v1/chat/completions");
    CHECK(stub.last_auth == "Bearer sk-test");
    CHECK(stub.last_body["model"] == "gpt-3.5-turbo");
    CHECK(stub.last_body["temperature"] == doctest::Approx(0.5));
    CHECK(stub.last_body["top_p"] == doctest::Approx(0.8));
    CHECK(stub.last_body["max_tokens"] == 64);
    CHECK(stub.last_body["messages"].size() == 2);
    CHECK(stub.last_body["messages"][1]["content"] == "[stage: zero_shot]\nhello");
}

TEST_CASE("refusal text is flagged") {
    Stub stub;
    stub.behave = [](int, httplib::Response& res) { reply(res, "I'm sorry, but I cannot assist with that."); };
    HttpBackend backend(fast(stub));
    CHECK(backend.complete(request()).refusal);
}

TEST_CASE("429 past the retry cap") {
    Stub stub;
    stub.behave = [](int, httplib::Response& res) {
        res.status = 429;
        res.set_content("{\"error\":\"slow down\"}", "application/json");
    };
    HttpBackend backend(fast(stub));
    CHECK_THROWS_AS(backend.complete(request()), RateLimitedExhausted);
    CHECK(stub.hits == 4);  // first try + 3 retries
}

TEST_CASE("transient failures are retried") {
    Stub stub;
    stub.behave = [](int n, httplib::Response& res) {
        if (n == 1) {
            res.status = 429;
        } else if (n == 2) {
            res.status = 503;
        } else {
            reply(res, "ok");
        }
    };
    HttpBackend backend(fast(stub));
    CHECK(backend.complete(request()).text == "ok");
    CHECK(stub.hits == 3);
}

TEST_CASE("persistent server errors") {
    Stub stub;
    stub.behave = [](int, httplib::Response& res) {
        res.status = 500;
        res.set_content("boom", "text/plain");
    };
    HttpBackend backend(fast(stub));
    try {
        backend.complete(request());
        FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
        CHECK(e.status() == 500);
        CHECK(e.body_excerpt() == "boom");
    }
}

TEST_CASE("auth failures are not retried") {
    Stub stub;
    stub.behave = [](int, httplib::Response& res) { res.status = 401; };
    HttpBackend backend(fast(stub));
    CHECK_THROWS_AS(backend.complete(request()), AuthError);
    CHECK(stub.hits == 1);
}

TEST_CASE("client errors surface immediately") {
    Stub stub;
    stub.behave = [](int, httplib::Response& res) {
        res.status = 400;
        res.set_content("bad request", "text/plain");
    };
    HttpBackend backend(fast(stub));
    CHECK_THROWS_AS(backend.complete(request()), ProviderError);
    CHECK(stub.hits == 1);
}

TEST_CASE("malformed success bodies") {
    Stub stub;
    stub.behave = [](int, httplib::Response& res) { res.set_content("{\"choices\":[]}", "application/json"); };
    HttpBackend backend(fast(stub));
    CHECK_THROWS_AS(backend.complete(request()), ProviderError);
}

TEST_CASE("timeouts") {
    Stub stub;
    stub.behave = [](int, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(400));
        reply(res, "late");
    };
    auto o = fast(stub);
    o.timeout = std::chrono::milliseconds(100);
    o.max_retries = 1;
    HttpBackend backend(o);
    CHECK_THROWS_AS(backend.complete(request()), TimeoutError);
}

TEST_CASE("requests per minute are paced") {
    Stub stub;
    stub.behave = [](int, httplib::Response& res) { reply(res, "ok"); };
    auto o = fast(stub);
    o.requests_per_minute = 600;  // one every 100 ms
    HttpBackend backend(o);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 4; ++i) backend.complete(request());
    const auto elapsed = std::chrono::steady_clock::now() - start;
    CHECK(elapsed >= std::chrono::milliseconds(290));
}

TEST_CASE("bad endpoints") {
    HttpOptions o;
    o.base_url = "localhost:1234";
    CHECK_THROWS_AS(HttpBackend{o}, ConfigError);

    // nothing listening
    Stub* probe = new Stub;
    const std::string url = probe->url();
    delete probe;
    o.base_url = url;
    o.max_retries = 0;
    o.timeout = std::chrono::milliseconds(500);
    HttpBackend backend(o);
    CHECK_THROWS_AS(backend.complete(request()), BackendError);
}
