#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coi/labels.hpp"

namespace coi {

enum class Speaker { Therapist, Patient };

std::string_view to_string(Speaker s) noexcept;

struct Utterance {
    std::int64_t index = 0;
    Speaker speaker = Speaker::Therapist;
    std::string text;
    std::optional<PatientCode> gold_patient_code;
    std::optional<SubCode> gold_subcode;
    std::optional<TherapistCode> gold_therapist_code;

    bool is_gold_patient() const noexcept {
        return speaker == Speaker::Patient && gold_patient_code.has_value();
    }
};

struct Session {
    std::string session_id;
    std::string metadata;
    std::vector<Utterance> utterances;
};

/// Identity of a data entry; used for split disjointness, fallback seeding
/// and report alignment.
struct WindowId {
    std::string session_id;
    std::size_t window_index = 0;

    auto operator<=>(const WindowId&) const = default;
    std::string to_string() const { return session_id + "#" + std::to_string(window_index); }
};

struct Window {
    WindowId id;
    std::vector<Utterance> utterances;
    PatientCode gold_label = PatientCode::FollowNeutral;
    /// Utterance::index of the utterance that supplied gold_label.
    std::int64_t gold_label_position = 0;
};

enum class RejectReason { MissingCode, MalformedRow, EmptyText, NonAlternatingUnknownSpeaker };

std::string_view to_string(RejectReason r) noexcept;

struct ValidationIssue {
    RejectReason reason;
    std::size_t line_number;
    std::string detail;
};

struct ValidationReport {
    std::string session_id;
    std::size_t record_count = 0;
    std::vector<ValidationIssue> issues;

    bool accepted() const noexcept { return issues.empty(); }
};

/// Field names of the line-delimited JSON transcript format.
struct TranscriptFormat {
    std::string session_id = "session_id";
    std::string index = "index";
    std::string speaker = "speaker";
    std::string text = "text";
    std::string patient_code = "patient_code";
    std::string subcode = "subcode";
    std::string therapist_code = "therapist_code";
    std::string metadata = "metadata";
};

struct ParsedCorpus {
    std::vector<Session> sessions;  // accepted only, in order of first appearance
    std::vector<ValidationReport> reports;  // one per session seen, accepted or not

    std::size_t rejected_count() const noexcept;
};

/// Lower-cases ASCII, trims, and collapses internal whitespace runs to one space.
std::string normalize(std::string_view text);

/// Reads a file or a directory of per-session files (*.jsonl, sorted by name).
/// Lines that are not JSON objects with a string session id raise FormatError;
/// every other defect is recorded against its session, which is then rejected.
ParsedCorpus parse_corpus(const std::filesystem::path& path, const TranscriptFormat& format = {});
ParsedCorpus parse_corpus(std::istream& in, const TranscriptFormat& format = {});

/// Writes sessions in the line-delimited format read by parse_corpus.
void write_corpus(std::ostream& out, const std::vector<Session>& sessions,
                  const TranscriptFormat& format = {});

struct Segmentation {
    std::vector<Window> windows;
    std::size_t skipped_groups = 0;      // full groups without a gold-coded patient utterance
    std::size_t dropped_remainder = 0;   // trailing utterances that do not fill a group
};

/// Cuts the session into consecutive non-overlapping groups of window_size.
Segmentation segment_windows(const Session& session, std::size_t window_size = 10);

/// All windows of a corpus, in session order.
std::vector<Window> segment_corpus(const std::vector<Session>& sessions, std::size_t window_size,
                                   std::size_t* skipped_groups = nullptr);

struct CorpusStats {
    std::size_t utterance_count = 0;
    std::array<std::size_t, 3> count_per_patient_code{};  // indexed by PatientCode
    double avg_tokens_per_utterance = 0.0;
    std::size_t session_count = 0;
    double avg_utterances_per_session = 0.0;
    bool empty = true;
};

std::size_t count_tokens(std::string_view normalized_text);

CorpusStats corpus_stats(const std::vector<Session>& sessions);

std::string format_stats_table(const CorpusStats& stats);
std::string stats_record(const CorpusStats& stats);

}  // namespace coi

template <>
struct std::hash<coi::WindowId> {
    std::size_t operator()(const coi::WindowId& id) const noexcept {
        return std::hash<std::string>{}(id.session_id) * 31u + id.window_index;
    }
};
