#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "coi/transcript.hpp"

namespace testing {

inline coi::Utterance therapist(std::int64_t index, std::string text) {
    coi::Utterance u;
    u.index = index;
    u.speaker = coi::Speaker::Therapist;
    u.text = coi::normalize(text);
    return u;
}

inline coi::Utterance patient(std::int64_t index, std::string text, std::optional<coi::PatientCode> code) {
    coi::Utterance u;
    u.index = index;
    u.speaker = coi::Speaker::Patient;
    u.text = coi::normalize(text);
    u.gold_patient_code = code;
    return u;
}

/// Alternating therapist/patient session; patient utterances take codes[k] in turn.
inline coi::Session alternating(std::string id, std::size_t n,
                                const std::vector<coi::PatientCode>& codes = {coi::PatientCode::FollowNeutral}) {
    coi::Session s;
    s.session_id = std::move(id);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i % 2 == 0) {
            s.utterances.push_back(therapist(static_cast<std::int64_t>(i), "t" + std::to_string(i)));
        } else {
            s.utterances.push_back(
                patient(static_cast<std::int64_t>(i), "p" + std::to_string(i), codes[k++ % codes.size()]));
        }
    }
    return s;
}

inline coi::Window window_of(const std::string& sid, std::size_t idx, std::vector<coi::Utterance> us,
                             coi::PatientCode gold) {
    coi::Window w;
    w.id = {sid, idx};
    w.utterances = std::move(us);
    w.gold_label = gold;
    return w;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    static std::random_device rd;
    auto p = std::filesystem::temp_directory_path() / ("coi-test-" + name + "-" + std::to_string(rd()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace testing
