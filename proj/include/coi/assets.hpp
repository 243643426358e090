#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coi/chain.hpp"
#include "coi/labels.hpp"

namespace coi {

/// One row of the MISC sample table: a patient utterance that exemplifies a
/// code, with the therapist turn that preceded it.
struct CueEntry {
    std::string cue_text;  // normalized patient utterance
    std::optional<SubCode> subcode;
    PatientCode code = PatientCode::FollowNeutral;
    std::string description;
    std::string therapist_lead_in;  // normalized
    TherapistCode therapist_code{TherapistCode::Kind::ClosedQuestion};
};

class CueTable {
public:
    CueTable() = default;
    explicit CueTable(std::vector<CueEntry> entries) : entries_(std::move(entries)) {}

    const std::vector<CueEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// First entry whose cue text contains the normalized phrase.
    const CueEntry* lookup(std::string_view phrase) const;
    std::vector<const CueEntry*> entries_for(PatientCode code) const;

private:
    std::vector<CueEntry> entries_;
};

class MissingAsset : public Error {
public:
    explicit MissingAsset(const std::string& name) : Error("missing asset: " + name) {}
};

class MalformedAsset : public Error {
public:
    MalformedAsset(const std::string& name, const std::string& reason)
        : Error("malformed asset " + name + ": " + reason) {}
};

struct Assets {
    std::string misc_definitions;
    TemplateLibrary templates;
    CueTable cues;
};

inline constexpr std::string_view kDefinitionsFile = "misc_definitions.txt";
inline constexpr std::string_view kTemplatesFile = "templates.json";
inline constexpr std::string_view kCuesFile = "cues.tsv";

/// Reads misc_definitions.txt, templates.json and cues.tsv from dir.
Assets load_assets(const std::filesystem::path& dir);

/// Parses the tab-separated cue table (header line first).
CueTable parse_cue_table(std::string_view tsv, const std::string& name = std::string(kCuesFile));

/// The assets/ directory of the source tree, fixed at build time.
std::filesystem::path default_asset_dir();

}  // namespace coi
