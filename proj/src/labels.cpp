#include "coi/labels.hpp"

#include <algorithm>
#include <cctype>

namespace coi {

namespace {

std::string lower_collapsed(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

// Drops whitespace, '_' and '-' so "Closed Question", "closed_question"
// and "closedquestion" compare equal.
std::string squashed(std::string_view text) {
    std::string out;
    for (unsigned char c : text) {
        if (std::isspace(c) || c == '_' || c == '-') continue;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

struct TherapistName {
    TherapistCode::Kind kind;
    std::string_view canonical;
};

constexpr std::array<TherapistName, 8> kTherapistNames = {{
    {TherapistCode::Kind::ClosedQuestion, "closed_question"},
    {TherapistCode::Kind::OpenQuestion, "open_question"},
    {TherapistCode::Kind::Support, "support"},
    {TherapistCode::Kind::Structure, "structure"},
    {TherapistCode::Kind::GiveInformation, "give_information"},
    {TherapistCode::Kind::Warn, "warn"},
    {TherapistCode::Kind::EmphasizeControl, "emphasize_control"},
    {TherapistCode::Kind::Direct, "direct"},
}};

constexpr std::array<std::string_view, 4> kDimensionNames = {
    "commitment", "ability", "desire", "reason"};

}  // namespace

TherapistCode TherapistCode::parse(std::string_view text) {
    const std::string key = squashed(text);
    for (const auto& n : kTherapistNames) {
        if (squashed(n.canonical) == key) return TherapistCode(n.kind);
    }
    return other(std::string(text));
}

std::string TherapistCode::to_string() const {
    if (kind_ == Kind::Other) return other_text_;
    for (const auto& n : kTherapistNames) {
        if (n.kind == kind_) return std::string(n.canonical);
    }
    return {};
}

Valence valence_of(PatientCode code) noexcept {
    switch (code) {
        case PatientCode::ChangeTalk: return Valence::Positive;
        case PatientCode::SustainTalk: return Valence::Negative;
        case PatientCode::FollowNeutral: break;
    }
    return Valence::Neutral;
}

PatientCode code_of_valence(Valence v) noexcept {
    switch (v) {
        case Valence::Positive: return PatientCode::ChangeTalk;
        case Valence::Negative: return PatientCode::SustainTalk;
        case Valence::Neutral: break;
    }
    return PatientCode::FollowNeutral;
}

PatientCode code_of_subcode(const std::optional<SubCode>& s) noexcept {
    if (!s) return PatientCode::FollowNeutral;
    return s->sign == SubCodeSign::Plus ? PatientCode::ChangeTalk : PatientCode::SustainTalk;
}

std::string_view to_string(PatientCode code) noexcept {
    switch (code) {
        case PatientCode::ChangeTalk: return "change_talk";
        case PatientCode::SustainTalk: return "sustain_talk";
        case PatientCode::FollowNeutral: break;
    }
    return "follow_neutral";
}

std::string_view to_string(Valence v) noexcept {
    switch (v) {
        case Valence::Positive: return "positive";
        case Valence::Negative: return "negative";
        case Valence::Neutral: break;
    }
    return "neutral";
}

std::string to_string(const SubCode& s) {
    std::string out(kDimensionNames[static_cast<std::size_t>(s.dimension)]);
    out.push_back(s.sign == SubCodeSign::Plus ? '+' : '-');
    return out;
}

std::optional<SubCode> parse_subcode(std::string_view text) {
    std::string t = lower_collapsed(text);
    if (t.empty() || t == "n/a" || t == "na" || t == "none") return std::nullopt;

    SubCodeSign sign;
    constexpr std::string_view kUnicodeMinus = "\xE2\x88\x92";
    if (t.back() == '+') {
        sign = SubCodeSign::Plus;
        t.pop_back();
    } else if (t.back() == '-') {
        sign = SubCodeSign::Minus;
        t.pop_back();
    } else if (t.size() >= kUnicodeMinus.size() &&
               std::string_view(t).substr(t.size() - kUnicodeMinus.size()) == kUnicodeMinus) {
        sign = SubCodeSign::Minus;
        t.resize(t.size() - kUnicodeMinus.size());
    } else {
        throw UnrecognizedLabel(std::string(text));
    }
    while (!t.empty() && t.back() == ' ') t.pop_back();

    for (std::size_t i = 0; i < kDimensionNames.size(); ++i) {
        if (t == kDimensionNames[i]) return SubCode{static_cast<SubCodeDimension>(i), sign};
    }
    throw UnrecognizedLabel(std::string(text));
}

const std::array<LabelSynonym, 13>& label_synonyms() noexcept {
    static const std::array<LabelSynonym, 13> table = {{
        {"positive", Valence::Positive},
        {"negative", Valence::Negative},
        {"neutral", Valence::Neutral},
        {"change_talk", PatientCode::ChangeTalk},
        {"follow_neutral", PatientCode::FollowNeutral},
        {"sustain_talk", PatientCode::SustainTalk},
        {"change talk", PatientCode::ChangeTalk},
        {"follow/neutral", PatientCode::FollowNeutral},
        {"follow neutral", PatientCode::FollowNeutral},
        {"sustain talk", PatientCode::SustainTalk},
        {"changetalk", PatientCode::ChangeTalk},
        {"followneutral", PatientCode::FollowNeutral},
        {"sustaintalk", PatientCode::SustainTalk},
    }};
    return table;
}

LabelToken parse_label_token(std::string_view text) {
    const std::string key = lower_collapsed(text);
    for (const auto& s : label_synonyms()) {
        if (s.text == key) return s.value;
    }
    throw UnrecognizedLabel(std::string(text));
}

PatientCode parse_patient_code(std::string_view text) {
    const LabelToken t = parse_label_token(text);
    if (const auto* c = std::get_if<PatientCode>(&t)) return *c;
    throw UnrecognizedLabel(std::string(text));
}

Valence parse_valence(std::string_view text) {
    const LabelToken t = parse_label_token(text);
    if (const auto* v = std::get_if<Valence>(&t)) return *v;
    throw UnrecognizedLabel(std::string(text));
}

}  // namespace coi
