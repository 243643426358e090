#include "coi/extraction.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "coi/chain.hpp"
#include "coi/random.hpp"

namespace coi {

using json = nlohmann::json;

namespace {

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// First word-bounded occurrence of needle in hay, or npos.
std::size_t find_word(std::string_view hay, std::string_view needle) {
    if (needle.empty()) return std::string_view::npos;
    for (std::size_t pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) {
        const bool left_ok = pos == 0 || !word_char(hay[pos - 1]) || !word_char(needle.front());
        const std::size_t end = pos + needle.size();
        const bool right_ok = end == hay.size() || !word_char(hay[end]) || !word_char(needle.back());
        if (left_ok && right_ok) return pos;
    }
    return std::string_view::npos;
}

Valence as_valence(const LabelToken& t) {
    if (const auto* v = std::get_if<Valence>(&t)) return *v;
    return valence_of(std::get<PatientCode>(t));
}

}  // namespace

ExtractionOutcome extract_valence(std::string_view text, const ExtractionConfig& config) {
    const std::string hay = lower(text);
    ExtractionOutcome best;

    auto consider = [&](std::string_view phrase, Valence v) {
        const std::string needle = lower(phrase);
        const std::size_t pos = find_word(hay, needle);
        if (pos == std::string_view::npos) return;
        if (best.match) {
            const auto& m = *best.match;
            if (pos > m.start) return;
            if (pos == m.start && needle.size() <= m.matched_text.size()) return;
        }
        best.match = ValenceMatch{v, pos, std::string(text.substr(pos, needle.size()))};
    };

    for (const auto& s : label_synonyms()) {
        if (!config.accept_code_names && std::holds_alternative<PatientCode>(s.value)) continue;
        consider(s.text, as_valence(s.value));
    }
    for (const auto& [phrase, v] : config.extra_synonyms) consider(phrase, v);
    return best;
}

std::string_view to_string(Provenance p) noexcept {
    switch (p) {
        case Provenance::Extracted: return "extracted";
        case Provenance::RandomFallback: return "random_fallback";
        case Provenance::Excluded: break;
    }
    return "excluded";
}

Provenance parse_provenance(std::string_view text) {
    if (text == "extracted") return Provenance::Extracted;
    if (text == "random_fallback") return Provenance::RandomFallback;
    if (text == "excluded") return Provenance::Excluded;
    throw FormatError(0, "unknown provenance '" + std::string(text) + "'");
}

Valence fallback_valence(const WindowId& window, std::uint64_t global_seed) {
    Rng rng(mix64(derive_seed(global_seed, "fallback") ^ fnv1a64(window.to_string())));
    return kValences[static_cast<std::size_t>(rng.below(kValences.size()))];
}

Resolution resolve_prediction(const ExtractionOutcome& outcome, const WindowId& window,
                              std::uint64_t global_seed) {
    if (outcome.match) return {outcome.match->valence, Provenance::Extracted};
    return {fallback_valence(window, global_seed), Provenance::RandomFallback};
}

PredictionRecord make_prediction(const ChainTranscript& transcript, PatientCode gold,
                                 std::uint64_t global_seed, const ExtractionConfig& config) {
    PredictionRecord r;
    r.window = transcript.window;
    r.method = transcript.method;
    r.model_id = transcript.model_id;
    r.raw_text = transcript.final_text;
    r.gold = gold;
    if (transcript.refused) {
        r.provenance = Provenance::Excluded;
        return r;
    }
    const Resolution res = resolve_prediction(extract_valence(transcript.final_text, config),
                                              transcript.window, global_seed);
    r.predicted = res.valence;
    r.provenance = res.provenance;
    return r;
}

std::string to_record(const PredictionRecord& r) {
    json j = {
        {"session_id", r.window.session_id},
        {"window_index", r.window.window_index},
        {"method", to_string(r.method)},
        {"model", r.model_id},
        {"predicted", r.predicted ? json(to_string(*r.predicted)) : json(nullptr)},
        {"provenance", to_string(r.provenance)},
        {"gold", to_string(r.gold)},
        {"raw_text", r.raw_text},
    };
    return j.dump();
}

PredictionRecord parse_record(std::string_view line) {
    const json j = json::parse(line, nullptr, false);
    if (!j.is_object()) throw FormatError(0, "prediction record is not a JSON object");
    try {
        PredictionRecord r;
        r.window.session_id = j.at("session_id").get<std::string>();
        r.window.window_index = j.at("window_index").get<std::size_t>();
        r.method = parse_method_id(j.at("method").get<std::string>());
        r.model_id = j.at("model").get<std::string>();
        if (!j.at("predicted").is_null()) r.predicted = parse_valence(j.at("predicted").get<std::string>());
        r.provenance = parse_provenance(j.at("provenance").get<std::string>());
        r.gold = parse_patient_code(j.at("gold").get<std::string>());
        r.raw_text = j.value("raw_text", std::string());
        if (r.predicted.has_value() == (r.provenance == Provenance::Excluded)) {
            throw FormatError(0, "prediction presence contradicts provenance");
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(0, std::string("bad prediction record: ") + e.what());
    } catch (const UnrecognizedLabel& e) {
        throw FormatError(0, std::string("bad prediction record: ") + e.what());
    }
}

}  // namespace coi
