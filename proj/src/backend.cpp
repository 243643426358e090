#include "coi/backend.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace coi {

using json = nlohmann::json;

std::string_view to_string(Role r) noexcept {
    switch (r) {
        case Role::System: return "system";
        case Role::Assistant: return "assistant";
        case Role::User: break;
    }
    return "user";
}

Role parse_role(std::string_view text) {
    if (text == "system") return Role::System;
    if (text == "user") return Role::User;
    if (text == "assistant") return Role::Assistant;
    throw ConfigError("unknown chat role '" + std::string(text) + "'");
}

std::string_view to_string(SamplingStrategy s) noexcept {
    return s == SamplingStrategy::Greedy ? "greedy" : "nucleus";
}

void SamplingParams::validate() const {
    if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
    if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

std::string canonical_request(const CompletionRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    json j = {
        {"model", req.model_id},
        {"messages", std::move(messages)},
        {"sampling",
         {{"strategy", to_string(req.sampling.strategy)},
          {"temperature", req.sampling.effective_temperature()},
          {"top_p", req.sampling.top_p},
          {"max_tokens", req.sampling.max_tokens}}},
    };
    return j.dump();
}

CacheKey CacheKey::of(const CompletionRequest& req) {
    const std::string bytes = canonical_request(req);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    CacheKey key;
    key.hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        key.hex.push_back(kHex[digest[i] >> 4]);
        key.hex.push_back(kHex[digest[i] & 0xf]);
    }
    return key;
}

const std::vector<std::string>& default_refusal_phrases() {
    static const std::vector<std::string> phrases = {
        "i cannot assist",
        "i can't assist",
        "i can't help with",
        "i cannot help with",
        "content policy",
        "content safety policy",
    };
    return phrases;
}

namespace {

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

void terminate_torn_line(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary | std::ios::ate);
    if (!in || in.tellg() <= 0) return;
    in.seekg(-1, std::ios::end);
    char last = '\n';
    in.get(last);
    in.close();
    if (last != '\n') std::ofstream(file, std::ios::app | std::ios::binary) << '\n';
}

bool detect_refusal(std::string_view text, std::span<const std::string> phrases) {
    if (text.empty()) return false;
    const std::string hay = ascii_lower(text);
    return std::any_of(phrases.begin(), phrases.end(), [&](const std::string& p) {
        return !p.empty() && hay.find(ascii_lower(p)) != std::string::npos;
    });
}

bool detect_refusal(std::string_view text) {
    return detect_refusal(text, default_refusal_phrases());
}

CompletionResponse FaultInjectingBackend::do_complete(const CompletionRequest& req) const {
    if (refuse_when_ && refuse_when_(req)) {
        CompletionResponse r;
        r.text = refusal_text_;
        return r;
    }
    return inner_->complete(req);
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create cache directory " + dir.string() + ": " + ec.message());
    file_ = dir / "responses.jsonl";

    std::ifstream in(file_);
    std::string line;
    while (std::getline(in, line)) {
        json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (!j.is_object() || !j.contains("key") || !j.contains("text")) continue;
        if (!j["key"].is_string() || !j["text"].is_string()) continue;
        entries_.emplace(j["key"].get<std::string>(), j["text"].get<std::string>());
    }
    terminate_torn_line(file_);
}

std::optional<std::string> ResponseCache::lookup(const CacheKey& key) const {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key.hex); it != entries_.end()) return it->second;
    return std::nullopt;
}

void ResponseCache::store(const CacheKey& key, const std::string& text) {
    std::lock_guard lock(mutex_);
    if (!entries_.emplace(key.hex, text).second) return;
    std::ofstream out(file_, std::ios::app);
    if (!out) throw IoError("cannot append to " + file_.string());
    out << json{{"key", key.hex}, {"text", text}}.dump() << '\n';
    out.flush();
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

CompletionResponse CachingBackend::do_complete(const CompletionRequest& req) const {
    const CacheKey key = CacheKey::of(req);
    if (auto hit = cache_->lookup(key)) {
        CompletionResponse r;
        r.text = std::move(*hit);
        r.cache_hit = true;
        return r;
    }
    CompletionResponse r = inner_->complete(req);
    // Refusals are cached too: a replay must reproduce the exclusion.
    cache_->store(key, r.text);
    return r;
}

}  // namespace coi
