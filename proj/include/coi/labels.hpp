#pragma once

#include <array>
#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "coi/error.hpp"

namespace coi {

/// The three mutually exclusive MISC patient categories. The enumerator
/// order is the row/column order of every confusion matrix.
enum class PatientCode { ChangeTalk = 0, FollowNeutral = 1, SustainTalk = 2 };

enum class Valence { Positive, Negative, Neutral };

inline constexpr std::array<PatientCode, 3> kPatientCodes = {
    PatientCode::ChangeTalk, PatientCode::FollowNeutral, PatientCode::SustainTalk};
inline constexpr std::array<Valence, 3> kValences = {
    Valence::Positive, Valence::Negative, Valence::Neutral};

enum class SubCodeDimension { Commitment, Ability, Desire, Reason };
enum class SubCodeSign { Plus, Minus };

/// A signed patient sub-code such as Commitment+ or Reason-.
/// Follow/Neutral utterances carry no sub-code; that is modelled as
/// std::optional<SubCode> being empty.
struct SubCode {
    SubCodeDimension dimension;
    SubCodeSign sign;

    friend bool operator==(const SubCode&, const SubCode&) = default;
};

/// MISC therapist category. Open: anything unrecognized is kept as Other
/// with its original spelling.
class TherapistCode {
public:
    enum class Kind {
        ClosedQuestion,
        OpenQuestion,
        Support,
        Structure,
        GiveInformation,
        Warn,
        EmphasizeControl,
        Direct,
        Other,
    };

    explicit TherapistCode(Kind kind) : kind_(kind) {}
    static TherapistCode other(std::string text) {
        TherapistCode c(Kind::Other);
        c.other_text_ = std::move(text);
        return c;
    }

    /// Case- and whitespace-insensitive; unknown names become Other(text).
    static TherapistCode parse(std::string_view text);

    Kind kind() const noexcept { return kind_; }
    const std::string& other_text() const noexcept { return other_text_; }

    /// "closed_question", ... ; Other renders its original text.
    std::string to_string() const;

    friend bool operator==(const TherapistCode&, const TherapistCode&) = default;

private:
    Kind kind_;
    std::string other_text_;
};

class UnrecognizedLabel : public Error {
public:
    explicit UnrecognizedLabel(std::string text)
        : Error("unrecognized label: '" + text + "'"), text_(std::move(text)) {}
    const std::string& text() const noexcept { return text_; }

private:
    std::string text_;
};

Valence valence_of(PatientCode code) noexcept;
PatientCode code_of_valence(Valence v) noexcept;
PatientCode code_of_subcode(const std::optional<SubCode>& s) noexcept;

std::string_view to_string(PatientCode code) noexcept;
std::string_view to_string(Valence v) noexcept;
std::string to_string(const SubCode& s);

/// Parses "commitment+", "Reason-", "reason−". "n/a", "none" and the
/// empty string yield an empty optional.
std::optional<SubCode> parse_subcode(std::string_view text);

using LabelToken = std::variant<PatientCode, Valence>;

/// Recognizes canonical names and the fixed synonym table below,
/// case-insensitively. Throws UnrecognizedLabel otherwise.
LabelToken parse_label_token(std::string_view text);

PatientCode parse_patient_code(std::string_view text);
Valence parse_valence(std::string_view text);

struct LabelSynonym {
    std::string_view text;
    LabelToken value;
};

/// The versioned synonym table. Extraction and parsing both read from it.
inline constexpr int kSynonymTableVersion = 1;
const std::array<LabelSynonym, 13>& label_synonyms() noexcept;

}  // namespace coi
