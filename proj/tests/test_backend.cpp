#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "coi/backend.hpp"
#include "support.hpp"

using namespace coi;

namespace {

CompletionRequest va_request(const std::string& dialogue, const std::string& model = "m") {
    CompletionRequest r;
    r.model_id = model;
    r.messages = {{Role::System, "You are a MISC coder."},
                  {Role::User, "[stage: valence_analysis]\n<transcript>\n" + dialogue + "\n</transcript>\n"
                               "Describe the general sentiment, then give the valence."}};
    return r;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

class CountingBackend final : public ChatBackend {
public:
    mutable std::atomic<int> calls{0};

private:
    CompletionResponse do_complete(const CompletionRequest& req) const override {
        ++calls;
        CompletionResponse r;
        r.text = "reply to " + req.messages.back().content;
        return r;
    }
};

}  // namespace

TEST_SUITE("backend") {

TEST_CASE("mock examples") {
    const auto pos = mock_complete(va_request("therapist: do you want to change?\npatient: i am going to stop smoking."));
    CHECK(lower(pos).find("the patient's valence should be coded as positive") != std::string::npos);

    const auto neg = mock_complete(va_request("therapist: why do you drink?\npatient: at least i get relaxed when i drink."));
    CHECK(lower(neg).find("the patient's valence should be coded as negative") != std::string::npos);

    const auto neu = mock_complete(va_request("therapist: how are you?\npatient: fine."));
    CHECK(lower(neu).find("the patient's valence should be coded as neutral") != std::string::npos);

    const auto drugs = mock_complete(va_request("patient: i want to quit doing drugs."));
    CHECK(lower(drugs).find("positive") != std::string::npos);
}

TEST_CASE("mock reads the last patient line and the stage marker") {
    const auto r = mock_complete(va_request("patient: i can do it.\ntherapist: and?\npatient: i cannot stop though."));
    CHECK(r.find("coded as negative") != std::string::npos);

    CompletionRequest id;
    id.messages = {{Role::User, "[stage: interaction_definition]\n<transcript>\npatient: i can do it.\n</transcript>"}};
    const auto out = mock_complete(id);
    CHECK(out.find("Interaction definition") != std::string::npos);
    CHECK(out.find("coded as") == std::string::npos);

    // the sentiment line only appears when asked for
    auto no_sentiment = va_request("patient: i can do it.");
    no_sentiment.messages.back().content = "[stage: valence_analysis]\n<transcript>\npatient: i can do it.\n</transcript>";
    CHECK(mock_complete(no_sentiment).find("General sentiment") == std::string::npos);
    CHECK(mock_complete(va_request("patient: i can do it.")).find("General sentiment") != std::string::npos);
}

TEST_CASE("every cue rule round-trips through the mock") {
    for (const auto& rule : MockBackend::cue_rules()) {
        const auto out = mock_complete(va_request("patient: well, " + std::string(rule.cue) + "."));
        CHECK(out.find("coded as " + std::string(rule.valence)) != std::string::npos);
    }
}

TEST_CASE("mock noise is deterministic and flips to another label") {
    const MockOptions opts{0.5, 99};
    int flipped = 0;
    for (int i = 0; i < 400; ++i) {
        const auto req = va_request("therapist: t" + std::to_string(i) + "\npatient: i can do it.");
        const auto a = mock_complete(req, opts);
        CHECK(a == mock_complete(req, opts));
        if (a.find("coded as positive") == std::string::npos) {
            ++flipped;
            CHECK((a.find("coded as negative") != std::string::npos || a.find("coded as neutral") != std::string::npos));
        }
    }
    CHECK(flipped > 140);
    CHECK(flipped < 260);
    // zero noise never flips
    for (int i = 0; i < 50; ++i) {
        const auto req = va_request("therapist: t" + std::to_string(i) + "\npatient: i can do it.");
        CHECK(mock_complete(req, {0.0, 99}).find("coded as positive") != std::string::npos);
    }
}

TEST_CASE("detect_refusal") {
    CHECK(detect_refusal("I cannot assist with that request."));
    CHECK(detect_refusal("Sorry, this violates our CONTENT POLICY."));
    CHECK(detect_refusal("I can't help with that."));
    CHECK_FALSE(detect_refusal("the patient's valence should be coded as neutral"));
    CHECK_FALSE(detect_refusal(""));
}

TEST_CASE("detect_refusal is monotone in the phrase list") {
    const std::vector<std::string> texts = {"", "I cannot assist", "blocked by filter", "coded as neutral",
                                            "policy", "We refuse."};
    std::vector<std::string> phrases;
    const std::vector<std::string> extra = {"filter", "refuse", "content policy", "i cannot assist", "zzz"};
    std::vector<bool> before(texts.size(), false);
    for (const auto& p : extra) {
        phrases.push_back(p);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            const bool now = detect_refusal(texts[i], phrases);
            if (before[i]) CHECK(now);
            before[i] = now;
        }
    }
    CHECK(before[2]);
    CHECK(before[5]);
    CHECK_FALSE(before[3]);
}

TEST_CASE("complete() flags refusals with the backend's phrases") {
    auto inner = std::make_shared<MockBackend>();
    FaultInjectingBackend fault(inner, [](const CompletionRequest&) { return true; });
    CHECK(fault.complete(va_request("patient: x")).refusal);

    FaultInjectingBackend custom(inner, [](const CompletionRequest&) { return true; }, "Blocked by filter.");
    CHECK_FALSE(custom.complete(va_request("patient: x")).refusal);
    custom.set_refusal_phrases({"blocked by filter"});
    CHECK(custom.complete(va_request("patient: x")).refusal);

    FaultInjectingBackend never(inner, [](const CompletionRequest&) { return false; });
    const auto r = never.complete(va_request("patient: i can do it."));
    CHECK_FALSE(r.refusal);
    CHECK(r.text.find("positive") != std::string::npos);
}

TEST_CASE("sampling params") {
    CHECK(SamplingParams::greedy().effective_temperature() == 0.0);
    SamplingParams g = SamplingParams::greedy();
    g.temperature = 0.9;
    CHECK(g.effective_temperature() == 0.0);
    const auto n = SamplingParams::nucleus();
    CHECK(n.temperature == 1.0);
    CHECK(n.top_p == 1.0);
    CHECK(n.effective_temperature() == 1.0);
    CHECK_NOTHROW(n.validate());
    CHECK_THROWS_AS(SamplingParams::nucleus(-1.0).validate(), ConfigError);
    CHECK_THROWS_AS(SamplingParams::nucleus(1.0, 0.0).validate(), ConfigError);
    CHECK_THROWS_AS(SamplingParams::greedy(0).validate(), ConfigError);
}

TEST_CASE("canonical_request and CacheKey") {
    const auto base = va_request("patient: hello");
    CHECK(canonical_request(base) == canonical_request(va_request("patient: hello")));
    CHECK(CacheKey::of(base) == CacheKey::of(va_request("patient: hello")));
    CHECK(CacheKey::of(base).hex.size() == 64);
    CHECK(nlohmann::json::parse(canonical_request(base)).is_object());

    // any field change gives a different key
    std::set<std::string> keys;
    keys.insert(CacheKey::of(base).hex);
    auto m = base;
    m.model_id = "other";
    CHECK(keys.insert(CacheKey::of(m).hex).second);
    auto t = base;
    t.sampling = SamplingParams::nucleus(0.7);
    CHECK(keys.insert(CacheKey::of(t).hex).second);
    auto p = base;
    p.sampling.top_p = 0.9;
    CHECK(keys.insert(CacheKey::of(p).hex).second);
    auto k = base;
    k.sampling.max_tokens = 100;
    CHECK(keys.insert(CacheKey::of(k).hex).second);
    auto r = base;
    r.messages[0].role = Role::User;
    CHECK(keys.insert(CacheKey::of(r).hex).second);
    auto c = base;
    c.messages.push_back({Role::Assistant, ""});
    CHECK(keys.insert(CacheKey::of(c).hex).second);
}

TEST_CASE("CacheKey injectivity at test scale") {
    std::set<std::string> keys;
    std::size_t n = 0;
    for (int model = 0; model < 4; ++model)
        for (int msg = 0; msg < 500; ++msg)
            for (auto s : {SamplingParams::greedy(), SamplingParams::nucleus(0.5, 0.9)}) {
                CompletionRequest r;
                r.model_id = "model-" + std::to_string(model);
                r.messages = {{Role::User, "message " + std::to_string(msg)}};
                r.sampling = s;
                keys.insert(CacheKey::of(r).hex);
                ++n;
            }
    CHECK(keys.size() == n);
}

TEST_CASE("cache soundness") {
    const auto dir = testing::temp_dir("cache");
    auto inner = std::make_shared<MockBackend>(MockOptions{0.3, 5});
    {
        CachingBackend cached(inner, std::make_shared<ResponseCache>(dir));
        for (int i = 0; i < 30; ++i) {
            const auto req = va_request("patient: line " + std::to_string(i) + " i can do it.");
            const auto cold = cached.complete(req);
            const auto warm = cached.complete(req);
            CHECK_FALSE(cold.cache_hit);
            CHECK(warm.cache_hit);
            CHECK(warm.text == cold.text);
            CHECK(cold.text == inner->complete(req).text);
        }
    }
    // a fresh process replays from disk
    auto counting = std::make_shared<CountingBackend>();
    CachingBackend replay(counting, std::make_shared<ResponseCache>(dir));
    for (int i = 0; i < 30; ++i) {
        const auto req = va_request("patient: line " + std::to_string(i) + " i can do it.");
        const auto r = replay.complete(req);
        CHECK(r.cache_hit);
        CHECK(r.text == inner->complete(req).text);
    }
    CHECK(counting->calls == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cache keeps refusals and survives a torn line") {
    const auto dir = testing::temp_dir("cache-torn");
    auto refusing = std::make_shared<FaultInjectingBackend>(std::make_shared<MockBackend>(),
                                                            [](const CompletionRequest&) { return true; });
    const auto req = va_request("patient: x");
    {
        CachingBackend cached(refusing, std::make_shared<ResponseCache>(dir));
        CHECK(cached.complete(req).refusal);
        CHECK(cached.complete(req).refusal);
    }
    // simulate a crash mid-append
    {
        std::ofstream out(dir / "responses.jsonl", std::ios::app | std::ios::binary);
        out << "{\"key\":\"abc\",\"te";
    }
    auto cache = std::make_shared<ResponseCache>(dir);
    CHECK(cache->size() == 1);
    CachingBackend again(std::make_shared<CountingBackend>(), cache);
    const auto r = again.complete(req);
    CHECK(r.cache_hit);
    CHECK(r.refusal);
    const auto other = va_request("patient: y");
    again.complete(other);
    CHECK(ResponseCache(dir).size() == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cache is safe under concurrent use") {
    const auto dir = testing::temp_dir("cache-mt");
    auto cache = std::make_shared<ResponseCache>(dir);
    CachingBackend cached(std::make_shared<MockBackend>(), cache);
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t) {
        pool.emplace_back([&cached] {
            for (int i = 0; i < 100; ++i) cached.complete(va_request("patient: n" + std::to_string(i)));
        });
    }
    for (auto& th : pool) th.join();
    CHECK(cache->size() == 100);
    CHECK(ResponseCache(dir).size() == 100);
    std::filesystem::remove_all(dir);
}

TEST_CASE("request_body carries the OpenAI fields") {
    CompletionRequest r = va_request("patient: x", "gpt-3.5-turbo");
    r.sampling = SamplingParams::nucleus(0.7, 0.9, 256);
    const auto j = nlohmann::json::parse(HttpBackend::request_body(r));
    CHECK(j["model"] == "gpt-3.5-turbo");
    CHECK(j["temperature"] == doctest::Approx(0.7));
    CHECK(j["top_p"] == doctest::Approx(0.9));
    CHECK(j["max_tokens"] == 256);
    REQUIRE(j["messages"].size() == 2);
    CHECK(j["messages"][0]["role"] == "system");
    CHECK(j["messages"][1]["role"] == "user");

    const auto g = nlohmann::json::parse(HttpBackend::request_body(va_request("patient: x")));
    CHECK(g["temperature"] == 0.0);
}

TEST_CASE("roles") {
    for (auto r : {Role::System, Role::User, Role::Assistant}) CHECK(parse_role(to_string(r)) == r);
}

}
