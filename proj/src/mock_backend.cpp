#include <algorithm>
#include <array>
#include <cctype>

#include "coi/backend.hpp"
#include "coi/random.hpp"

namespace coi {

namespace {

constexpr std::array<MockBackend::CueRule, 8> kCueRules = {{
    {"stop smoking", "positive"},
    {"i can do it", "positive"},
    {"i want to quit", "positive"},
    {"killing myself", "positive"},
    {"never slow down", "negative"},
    {"cannot stop", "negative"},
    {"keep getting high", "negative"},
    {"get relaxed when i drink", "negative"},
}};

constexpr std::array<std::string_view, 3> kLabels = {"positive", "negative", "neutral"};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string stage_marker(std::string_view message) {
    constexpr std::string_view kOpen = "[stage:";
    const auto pos = message.rfind(kOpen);
    if (pos == std::string_view::npos) return {};
    const auto close = message.find(']', pos);
    if (close == std::string_view::npos) return {};
    return std::string(trim(message.substr(pos + kOpen.size(), close - pos - kOpen.size())));
}

// The dialogue under analysis: the last <transcript> block if present,
// otherwise the whole message. Few-shot examples sit outside that block.
std::string_view dialogue_region(std::string_view message) {
    constexpr std::string_view kOpen = "<transcript>";
    constexpr std::string_view kClose = "</transcript>";
    const auto open = message.rfind(kOpen);
    if (open == std::string_view::npos) return message;
    const auto begin = open + kOpen.size();
    const auto end = message.find(kClose, begin);
    return message.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin);
}

std::string_view last_patient_line(std::string_view region) {
    std::string_view found;
    while (!region.empty()) {
        const auto nl = region.find('\n');
        const std::string_view line = trim(region.substr(0, nl));
        if (line.substr(0, 8) == "patient:") found = line;
        if (nl == std::string_view::npos) break;
        region.remove_prefix(nl + 1);
    }
    return found.empty() ? region : found;
}

// 0 positive, 1 negative, 2 neutral. The cue starting latest wins.
std::size_t cue_valence(std::string_view focus) {
    std::size_t best = 2;
    std::size_t best_pos = 0;
    bool any = false;
    for (const auto& rule : kCueRules) {
        const auto pos = focus.rfind(rule.cue);
        if (pos == std::string_view::npos) continue;
        if (!any || pos > best_pos) {
            best = rule.valence == "positive" ? 0 : 1;
            best_pos = pos;
            any = true;
        }
    }
    return best;
}

constexpr std::array<std::string_view, 3> kInteraction = {
    "the last patient utterance states a commitment, ability, desire or reason that leans toward "
    "altering the target behavior, in answer to the therapist's question.",
    "the last patient utterance states a commitment, ability, desire or reason for keeping the "
    "target behavior as it is, in reply to the therapist's warning or direction.",
    "the last patient utterance reports information or simply answers the therapist, without a "
    "sub-code about the target behavior.",
};

constexpr std::array<std::string_view, 3> kInvolvement = {
    "the patient explores their own motives openly and expresses hope; engagement appears high.",
    "the patient shows little self-exploration and sounds defensive; engagement appears low.",
    "the patient answers briefly with little emotional expression; engagement appears moderate.",
};

constexpr std::array<std::string_view, 3> kSentiment = {
    "the patient sounds hopeful and determined.",
    "the patient sounds resistant and attached to the habit.",
    "the patient sounds calm and matter-of-fact.",
};

}  // namespace

std::span<const MockBackend::CueRule> MockBackend::cue_rules() noexcept { return kCueRules; }

std::string mock_complete(const CompletionRequest& req, const MockOptions& options) {
    std::string message;
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
        if (it->role == Role::User) {
            message = lower(it->content);
            break;
        }
    }

    std::size_t label = cue_valence(last_patient_line(dialogue_region(message)));
    if (options.noise > 0.0) {
        const std::uint64_t h = mix64(options.seed ^ fnv1a64(canonical_request(req)));
        const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        if (u < options.noise) label = (label + 1 + (mix64(h) & 1)) % 3;
    }

    const std::string stage = stage_marker(message);
    const std::string answer =
        "The patient's valence should be coded as " + std::string(kLabels[label]) + ".";

    if (stage == "interaction_definition") {
        return "Interaction definition: the therapist turns use MICO strategies such as questions, "
               "support and structure; " + std::string(kInteraction[label]);
    }
    if (stage == "involvement_assessment") {
        return "Involvement assessment: " + std::string(kInvolvement[label]);
    }
    if (stage == "valence_analysis") {
        std::string out;
        if (message.find("general sentiment") != std::string::npos) {
            out = "General sentiment: " + std::string(kSentiment[label]) + "\n";
        }
        return out + "Integrating the previous stages: " + answer;
    }
    if (stage == "zero_cot") {
        return "Let's think step by step. The last patient utterance is the one to code. " + answer;
    }
    return answer;
}

CompletionResponse MockBackend::do_complete(const CompletionRequest& req) const {
    CompletionResponse r;
    r.text = mock_complete(req, options_);
    return r;
}

}  // namespace coi
