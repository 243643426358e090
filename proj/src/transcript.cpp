#include "coi/transcript.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace coi {

using json = nlohmann::json;

std::string_view to_string(Speaker s) noexcept {
    return s == Speaker::Patient ? "patient" : "therapist";
}

std::string_view to_string(RejectReason r) noexcept {
    switch (r) {
        case RejectReason::MissingCode: return "missing_code";
        case RejectReason::MalformedRow: return "malformed_row";
        case RejectReason::EmptyText: return "empty_text";
        case RejectReason::NonAlternatingUnknownSpeaker: break;
    }
    return "unknown_speaker";
}

std::size_t ParsedCorpus::rejected_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(reports.begin(), reports.end(), [](const auto& r) { return !r.accepted(); }));
}

std::string normalize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
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

namespace {

struct SessionBuilder {
    Session session;
    ValidationReport report;
    std::string source;  // file the session came from
};

class CorpusReader {
public:
    explicit CorpusReader(const TranscriptFormat& format) : format_(format) {}

    void read(std::istream& in, const std::string& source) {
        std::string line;
        std::size_t line_number = 0;
        while (std::getline(in, line)) {
            ++line_number;
            if (normalize(line).empty()) continue;
            read_line(line, line_number, source);
        }
    }

    ParsedCorpus finish() {
        ParsedCorpus out;
        for (auto& b : builders_) {
            if (b.report.accepted()) out.sessions.push_back(std::move(b.session));
            out.reports.push_back(std::move(b.report));
        }
        builders_.clear();
        return out;
    }

private:
    void read_line(const std::string& line, std::size_t line_number, const std::string& source) {
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(line_number, "not valid JSON (" + source + ")");
        }
        if (!row.is_object()) throw FormatError(line_number, "record is not an object");
        const auto sid = row.find(format_.session_id);
        if (sid == row.end() || !sid->is_string()) {
            throw FormatError(line_number, "record has no string '" + format_.session_id + "'");
        }

        SessionBuilder& b = builder_for(sid->get<std::string>(), source, line_number);
        ++b.report.record_count;
        auto issue = [&](RejectReason r, std::string detail) {
            b.report.issues.push_back({r, line_number, std::move(detail)});
        };

        if (const auto meta = row.find(format_.metadata); meta != row.end()) {
            b.session.metadata = meta->is_string() ? meta->get<std::string>() : meta->dump();
        }

        Utterance u;
        const auto idx = row.find(format_.index);
        if (idx == row.end() || !idx->is_number_integer()) {
            issue(RejectReason::MalformedRow, "missing or non-integer index");
            return;
        }
        u.index = idx->get<std::int64_t>();
        if (!b.session.utterances.empty() && u.index <= b.session.utterances.back().index) {
            issue(RejectReason::MalformedRow, "index not strictly increasing");
        }

        const auto spk = row.find(format_.speaker);
        const std::string speaker = spk != row.end() && spk->is_string()
                                        ? normalize(spk->get<std::string>())
                                        : std::string();
        if (speaker == "therapist") {
            u.speaker = Speaker::Therapist;
        } else if (speaker == "patient") {
            u.speaker = Speaker::Patient;
        } else {
            issue(RejectReason::NonAlternatingUnknownSpeaker, "unknown speaker '" + speaker + "'");
            return;
        }

        const auto txt = row.find(format_.text);
        if (txt == row.end() || !txt->is_string()) {
            issue(RejectReason::MalformedRow, "missing text");
            return;
        }
        u.text = normalize(txt->get<std::string>());
        if (u.text.empty()) issue(RejectReason::EmptyText, "text empty after normalization");

        auto optional_string = [&](const std::string& key) -> std::optional<std::string> {
            const auto it = row.find(key);
            if (it == row.end() || it->is_null()) return std::nullopt;
            if (!it->is_string()) return std::string();
            return it->get<std::string>();
        };

        try {
            if (auto pc = optional_string(format_.patient_code); pc && !pc->empty()) {
                if (u.speaker != Speaker::Patient) {
                    issue(RejectReason::MalformedRow, "patient code on a therapist utterance");
                } else {
                    u.gold_patient_code = parse_patient_code(*pc);
                }
            }
            if (auto sc = optional_string(format_.subcode)) {
                u.gold_subcode = parse_subcode(*sc);
                if (u.gold_subcode && u.gold_patient_code &&
                    code_of_subcode(u.gold_subcode) != *u.gold_patient_code) {
                    issue(RejectReason::MalformedRow, "sub-code sign contradicts patient code");
                }
            }
        } catch (const UnrecognizedLabel& e) {
            issue(RejectReason::MalformedRow, e.what());
        }
        if (auto tc = optional_string(format_.therapist_code); tc && !tc->empty()) {
            u.gold_therapist_code = TherapistCode::parse(*tc);
        }

        if (u.speaker == Speaker::Patient && !u.gold_patient_code) {
            issue(RejectReason::MissingCode, "patient utterance without a gold code");
        }
        b.session.utterances.push_back(std::move(u));
    }

    SessionBuilder& builder_for(const std::string& id, const std::string& source,
                                std::size_t line_number) {
        if (auto it = by_id_.find(id); it != by_id_.end()) {
            SessionBuilder& b = builders_[it->second];
            if (b.source != source) {
                b.report.issues.push_back(
                    {RejectReason::MalformedRow, line_number, "session split across files"});
            }
            return b;
        }
        by_id_.emplace(id, builders_.size());
        SessionBuilder& b = builders_.emplace_back();
        b.session.session_id = id;
        b.report.session_id = id;
        b.source = source;
        return b;
    }

    const TranscriptFormat& format_;
    std::vector<SessionBuilder> builders_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace

ParsedCorpus parse_corpus(std::istream& in, const TranscriptFormat& format) {
    CorpusReader reader(format);
    reader.read(in, "<stream>");
    return reader.finish();
}

ParsedCorpus parse_corpus(const std::filesystem::path& path, const TranscriptFormat& format) {
    namespace fs = std::filesystem;
    std::error_code ec;
    std::vector<fs::path> files;
    if (fs::is_directory(path, ec)) {
        for (const auto& entry : fs::directory_iterator(path, ec)) {
            if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(path, ec)) {
        files.push_back(path);
    } else {
        throw IoError("cannot read corpus at " + path.string());
    }

    CorpusReader reader(format);
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) throw IoError("cannot open " + f.string());
        reader.read(in, f.string());
    }
    return reader.finish();
}

void write_corpus(std::ostream& out, const std::vector<Session>& sessions,
                  const TranscriptFormat& format) {
    for (const auto& s : sessions) {
        for (const auto& u : s.utterances) {
            json row;
            row[format.session_id] = s.session_id;
            row[format.index] = u.index;
            row[format.speaker] = std::string(to_string(u.speaker));
            row[format.text] = u.text;
            if (u.gold_patient_code) row[format.patient_code] = std::string(to_string(*u.gold_patient_code));
            if (u.gold_subcode) row[format.subcode] = to_string(*u.gold_subcode);
            if (u.gold_therapist_code) row[format.therapist_code] = u.gold_therapist_code->to_string();
            if (!s.metadata.empty()) row[format.metadata] = s.metadata;
            out << row.dump() << '\n';
        }
    }
}

Segmentation segment_windows(const Session& session, std::size_t window_size) {
    Segmentation out;
    if (window_size == 0) return out;
    const auto& utts = session.utterances;
    const std::size_t groups = utts.size() / window_size;
    out.dropped_remainder = utts.size() % window_size;

    for (std::size_t g = 0; g < groups; ++g) {
        const auto first = utts.begin() + static_cast<std::ptrdiff_t>(g * window_size);
        const auto last = first + static_cast<std::ptrdiff_t>(window_size);
        const auto labelled = std::find_if(std::make_reverse_iterator(last),
                                           std::make_reverse_iterator(first),
                                           [](const Utterance& u) { return u.is_gold_patient(); });
        if (labelled == std::make_reverse_iterator(first)) {
            ++out.skipped_groups;
            continue;
        }
        Window w;
        w.id = {session.session_id, g};
        w.utterances.assign(first, last);
        w.gold_label = *labelled->gold_patient_code;
        w.gold_label_position = labelled->index;
        out.windows.push_back(std::move(w));
    }
    return out;
}

std::vector<Window> segment_corpus(const std::vector<Session>& sessions, std::size_t window_size,
                                   std::size_t* skipped_groups) {
    std::vector<Window> out;
    std::size_t skipped = 0;
    for (const auto& s : sessions) {
        auto seg = segment_windows(s, window_size);
        skipped += seg.skipped_groups;
        std::move(seg.windows.begin(), seg.windows.end(), std::back_inserter(out));
    }
    if (skipped_groups) *skipped_groups = skipped;
    return out;
}

std::size_t count_tokens(std::string_view text) {
    std::size_t n = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_token) ++n;
        in_token = !space;
    }
    return n;
}

CorpusStats corpus_stats(const std::vector<Session>& sessions) {
    CorpusStats st;
    std::size_t tokens = 0;
    for (const auto& s : sessions) {
        ++st.session_count;
        for (const auto& u : s.utterances) {
            ++st.utterance_count;
            tokens += count_tokens(u.text);
            if (u.is_gold_patient()) {
                ++st.count_per_patient_code[static_cast<std::size_t>(*u.gold_patient_code)];
            }
        }
    }
    st.empty = st.utterance_count == 0;
    if (st.utterance_count > 0) {
        st.avg_tokens_per_utterance = static_cast<double>(tokens) / static_cast<double>(st.utterance_count);
    }
    if (st.session_count > 0) {
        st.avg_utterances_per_session =
            static_cast<double>(st.utterance_count) / static_cast<double>(st.session_count);
    }
    return st;
}

std::string format_stats_table(const CorpusStats& st) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%-10s | %-11s | %-14s | %-12s | %-6s\n"
                  "%-10zu | %-11zu | %-14zu | %-12zu | %-6.1f\n"
                  "%-10s | %-6s\n"
                  "%-10zu | %-6.1f\n",
                  "Utterance", "Change Talk", "Follow/Neutral", "Sustain Talk", "L",
                  st.utterance_count, st.count_per_patient_code[0], st.count_per_patient_code[1],
                  st.count_per_patient_code[2], st.avg_tokens_per_utterance, "Session", "U",
                  st.session_count, st.avg_utterances_per_session);
    std::string out(buf);
    if (st.empty) out += "(empty corpus)\n";
    return out;
}

std::string stats_record(const CorpusStats& st) {
    json j;
    j["utterance_count"] = st.utterance_count;
    j["change_talk"] = st.count_per_patient_code[0];
    j["follow_neutral"] = st.count_per_patient_code[1];
    j["sustain_talk"] = st.count_per_patient_code[2];
    j["avg_tokens_per_utterance"] = st.avg_tokens_per_utterance;
    j["session_count"] = st.session_count;
    j["avg_utterances_per_session"] = st.avg_utterances_per_session;
    j["empty"] = st.empty;
    return j.dump();
}

}  // namespace coi
