#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "coi/labels.hpp"
#include "coi/method.hpp"
#include "coi/transcript.hpp"

namespace coi {

struct ChainTranscript;

struct ExtractionConfig {
    /// Accept patient-code names ("change talk", ...) as answers.
    bool accept_code_names = true;
    /// Additional (phrase, valence) pairs on top of the built-in table.
    std::vector<std::pair<std::string, Valence>> extra_synonyms;
};

struct ValenceMatch {
    Valence valence;
    std::size_t start;
    std::string matched_text;
};

struct ExtractionOutcome {
    std::optional<ValenceMatch> match;  // empty: no label found

    bool matched() const noexcept { return match.has_value(); }
};

/// Earliest word-bounded label mention wins; at equal start the longer
/// phrase wins. Case-insensitive.
ExtractionOutcome extract_valence(std::string_view text, const ExtractionConfig& config = {});

enum class Provenance { Extracted, RandomFallback, Excluded };

std::string_view to_string(Provenance p) noexcept;
Provenance parse_provenance(std::string_view text);

struct Resolution {
    Valence valence;
    Provenance provenance;
};

/// Uniform label for an unanswered window. Depends only on (seed, window),
/// never on processing order.
Valence fallback_valence(const WindowId& window, std::uint64_t global_seed);

Resolution resolve_prediction(const ExtractionOutcome& outcome, const WindowId& window,
                              std::uint64_t global_seed);

struct PredictionRecord {
    WindowId window;
    MethodId method = MethodId::CoI;
    std::string model_id;
    std::optional<Valence> predicted;  // empty iff provenance is Excluded
    Provenance provenance = Provenance::Excluded;
    std::string raw_text;
    PatientCode gold = PatientCode::FollowNeutral;
};

PredictionRecord make_prediction(const ChainTranscript& transcript, PatientCode gold,
                                 std::uint64_t global_seed, const ExtractionConfig& config = {});

/// One-line JSON form used in predictions files.
std::string to_record(const PredictionRecord& record);
PredictionRecord parse_record(std::string_view line);

}  // namespace coi
