#include "coi/assets.hpp"

#include <fstream>
#include <sstream>

#include "coi/transcript.hpp"

#ifndef COI_ASSET_DIR
#define COI_ASSET_DIR "assets"
#endif

namespace coi {

const CueEntry* CueTable::lookup(std::string_view phrase) const {
    const std::string needle = normalize(phrase);
    for (const auto& e : entries_) {
        if (e.cue_text.find(needle) != std::string::npos) return &e;
    }
    return nullptr;
}

std::vector<const CueEntry*> CueTable::entries_for(PatientCode code) const {
    std::vector<const CueEntry*> out;
    for (const auto& e : entries_) {
        if (e.code == code) out.push_back(&e);
    }
    return out;
}

namespace {

std::string read_asset(const std::filesystem::path& dir, std::string_view name) {
    const auto path = dir / name;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingAsset(path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

}  // namespace

CueTable parse_cue_table(std::string_view tsv, const std::string& name) {
    // Columns: patient_code, subcode, description, therapist_utterance,
    // therapist_code, patient_utterance.
    std::istringstream in{std::string(tsv)};
    std::string line;
    std::vector<CueEntry> entries;
    std::size_t line_number = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        const auto cols = split_tabs(line);
        const std::string where = "line " + std::to_string(line_number);
        if (cols.size() != 6) throw MalformedAsset(name, where + ": expected 6 columns");
        CueEntry e;
        try {
            e.code = parse_patient_code(cols[0]);
            e.subcode = parse_subcode(cols[1]);
        } catch (const UnrecognizedLabel& err) {
            throw MalformedAsset(name, where + ": " + err.what());
        }
        if (code_of_subcode(e.subcode) != e.code) {
            throw MalformedAsset(name, where + ": sub-code sign contradicts patient code");
        }
        e.description = cols[2];
        e.therapist_lead_in = normalize(cols[3]);
        e.therapist_code = TherapistCode::parse(cols[4]);
        e.cue_text = normalize(cols[5]);
        if (e.cue_text.empty()) throw MalformedAsset(name, where + ": empty patient utterance");
        entries.push_back(std::move(e));
    }
    return CueTable(std::move(entries));
}

Assets load_assets(const std::filesystem::path& dir) {
    Assets a;
    a.misc_definitions = read_asset(dir, kDefinitionsFile);
    if (normalize(a.misc_definitions).empty()) {
        throw MalformedAsset(std::string(kDefinitionsFile), "definitions are empty");
    }

    const std::string templates = read_asset(dir, kTemplatesFile);
    try {
        a.templates = TemplateLibrary::from_json(templates);
    } catch (const ConfigError& e) {
        throw MalformedAsset(std::string(kTemplatesFile), e.what());
    }
    for (const auto& key : TemplateLibrary::required_keys()) {
        if (!a.templates.contains(key)) throw MalformedAsset(std::string(kTemplatesFile), "no template '" + key + "'");
    }

    a.cues = parse_cue_table(read_asset(dir, kCuesFile));
    if (a.cues.size() == 0) throw MalformedAsset(std::string(kCuesFile), "no cue rows");
    return a;
}

std::filesystem::path default_asset_dir() { return COI_ASSET_DIR; }

}  // namespace coi
