#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "coi/random.hpp"
#include "coi/runner.hpp"

namespace coi {

namespace {

// Filler lines are free of every mock cue phrase and label word, so a
// non-cue utterance carries no signal.
constexpr std::array<std::string_view, 4> kChangeFiller = {
    "i have been thinking about cutting back a little.",
    "maybe it would be good to drink less on weekends.",
    "my grades would probably improve if i went out less.",
    "i guess i could try going a week without it.",
};
constexpr std::array<std::string_view, 5> kFollowFiller = {
    "i live in the dorms with two roommates.",
    "we usually go out on fridays.",
    "it was about three weeks ago.",
    "my classes start at nine.",
    "i am not sure what you mean.",
};
constexpr std::array<std::string_view, 4> kSustainFiller = {
    "everybody at my school drinks like that.",
    "it is not a big deal for me.",
    "i like how it feels at parties.",
    "i don't think i drink more than my friends.",
};

struct TherapistLine {
    std::string_view text;
    std::string_view code;
};
constexpr std::array<TherapistLine, 8> kTherapistFiller = {{
    {"how has your week been?", "open_question"},
    {"tell me more about that.", "open_question"},
    {"so going out is a big part of your weekends.", "reflection"},
    {"let's look at the feedback form together.", "structure"},
    {"many students drink less than they think others do.", "give_information"},
    {"did that happen last semester?", "closed_question"},
    {"it sounds like you have thought about this a lot.", "support"},
    {"it's your decision what you do with this.", "emphasize_control"},
}};

constexpr std::array<std::string_view, 6> kCuePrefixes = {"", "well, ", "honestly, ", "i mean, ", "you know, ", "yeah. "};

template <typename Array>
std::string_view pick(const Array& a, Rng& rng) {
    return a[static_cast<std::size_t>(rng.below(a.size()))];
}

PatientCode draw_code(const std::array<double, 3>& mix, Rng& rng) {
    const double total = mix[0] + mix[1] + mix[2];
    const double u = rng.uniform() * total;
    if (u < mix[0]) return PatientCode::ChangeTalk;
    if (u < mix[0] + mix[1]) return PatientCode::FollowNeutral;
    return PatientCode::SustainTalk;
}

}  // namespace

void SynthParams::validate() const {
    for (double p : label_mix) {
        if (!(p >= 0.0)) throw ConfigError("label_mix entries must be non-negative");
    }
    const double sum = label_mix[0] + label_mix[1] + label_mix[2];
    if (std::abs(sum - 1.0) > 0.01) throw ConfigError("label_mix must sum to 1");
    if (!(cue_rate >= 0.0 && cue_rate <= 1.0)) throw ConfigError("cue_rate must lie in [0, 1]");
}

std::vector<Session> generate_synthetic_corpus(const SynthParams& params, const CueTable& cues) {
    params.validate();
    Rng rng(derive_seed(params.seed, "synth"));
    std::vector<Session> sessions;
    sessions.reserve(params.n_sessions);

    for (std::size_t s = 0; s < params.n_sessions; ++s) {
        Session session;
        char id[32];
        std::snprintf(id, sizeof id, "synth-%04zu", s);
        session.session_id = id;
        session.metadata = "synthetic";

        const std::size_t n = params.utterances_per_session;
        for (std::size_t i = 0; i < n; i += 2) {
            Utterance therapist;
            therapist.index = static_cast<std::int64_t>(i);
            therapist.speaker = Speaker::Therapist;

            if (i + 1 >= n) {
                const auto& line = kTherapistFiller[static_cast<std::size_t>(rng.below(kTherapistFiller.size()))];
                therapist.text = std::string(line.text);
                therapist.gold_therapist_code = TherapistCode::parse(line.code);
                session.utterances.push_back(std::move(therapist));
                break;
            }

            Utterance patient;
            patient.index = static_cast<std::int64_t>(i + 1);
            patient.speaker = Speaker::Patient;
            const PatientCode code = draw_code(params.label_mix, rng);
            patient.gold_patient_code = code;

            const bool plant = rng.uniform() < params.cue_rate;
            const auto candidates = cues.entries_for(code);
            if (plant && !candidates.empty()) {
                const CueEntry& cue = *candidates[static_cast<std::size_t>(rng.below(candidates.size()))];
                patient.text = std::string(pick(kCuePrefixes, rng)) + cue.cue_text;
                patient.gold_subcode = cue.subcode;
                therapist.text = cue.therapist_lead_in;
                therapist.gold_therapist_code = cue.therapist_code;
            } else {
                switch (code) {
                    case PatientCode::ChangeTalk: patient.text = std::string(pick(kChangeFiller, rng)); break;
                    case PatientCode::FollowNeutral: patient.text = std::string(pick(kFollowFiller, rng)); break;
                    case PatientCode::SustainTalk: patient.text = std::string(pick(kSustainFiller, rng)); break;
                }
                if (code != PatientCode::FollowNeutral) {
                    patient.gold_subcode = SubCode{static_cast<SubCodeDimension>(rng.below(4)),
                                                   code == PatientCode::ChangeTalk ? SubCodeSign::Plus
                                                                                   : SubCodeSign::Minus};
                }
                const auto& line = kTherapistFiller[static_cast<std::size_t>(rng.below(kTherapistFiller.size()))];
                therapist.text = std::string(line.text);
                therapist.gold_therapist_code = TherapistCode::parse(line.code);
            }
            session.utterances.push_back(std::move(therapist));
            session.utterances.push_back(std::move(patient));
        }
        sessions.push_back(std::move(session));
    }
    return sessions;
}

void write_synthetic_corpus(const std::filesystem::path& out, const SynthParams& params, const CueTable& cues) {
    const auto sessions = generate_synthetic_corpus(params, cues);
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    std::ofstream file(out, std::ios::binary);
    if (!file) throw IoError("cannot write " + out.string());
    write_corpus(file, sessions);
}

}  // namespace coi
