#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coi/extraction.hpp"
#include "coi/labels.hpp"
#include "coi/method.hpp"
#include "coi/transcript.hpp"

namespace coi {

/// 3x3 counts indexed (gold, predicted) in PatientCode order
/// [ChangeTalk, FollowNeutral, SustainTalk].
class ConfusionMatrix {
public:
    void add(PatientCode gold, PatientCode predicted) { ++counts_[idx(gold)][idx(predicted)]; }

    std::size_t at(PatientCode gold, PatientCode predicted) const { return counts_[idx(gold)][idx(predicted)]; }
    std::size_t gold_total(PatientCode c) const;
    std::size_t predicted_total(PatientCode c) const;
    std::size_t total() const;
    std::size_t trace() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    static std::size_t idx(PatientCode c) { return static_cast<std::size_t>(c); }
    std::array<std::array<std::size_t, 3>, 3> counts_{};
};

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    /// Appears in gold or predictions. Absent classes are left out of macro-F1.
    bool present = false;
};

struct EvalReport {
    MethodId method = MethodId::CoI;
    std::string model_id;
    ConfusionMatrix confusion;
    std::array<ClassScores, 3> per_class{};  // PatientCode order
    std::optional<double> micro_f1;  // empty when nothing was scored
    std::optional<double> macro_f1;
    std::size_t n_scored = 0;
    std::size_t n_excluded = 0;
    std::size_t n_fallback = 0;

    double fallback_rate() const {
        return n_scored == 0 ? 0.0 : static_cast<double>(n_fallback) / static_cast<double>(n_scored);
    }
};

class IdentityMismatch : public Error {
public:
    using Error::Error;
};

/// Fills per-class, micro and macro scores from the confusion counts.
void compute_scores(EvalReport& report);

/// Scores one (method, model) cell. Every non-excluded record needs a gold
/// label in golds, and each window may be predicted once.
EvalReport score(std::span<const PredictionRecord> predictions, const std::map<WindowId, PatientCode>& golds);

/// Scores using the gold label carried by each record.
EvalReport score(std::span<const PredictionRecord> predictions);

/// Groups records by (method, model) in first-appearance order and scores each group.
std::vector<EvalReport> score_grouped(std::span<const PredictionRecord> predictions);

struct FormattedReport {
    std::string table;    // human-readable, percentages to one decimal
    std::string records;  // one JSON object per line
};

/// Methods as rows, (Micro-F1, Macro-F1) per model as column pairs, plus an
/// Average pair when there is more than one model.
FormattedReport format_report(std::span<const EvalReport> reports);

}  // namespace coi
