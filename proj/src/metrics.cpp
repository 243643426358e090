#include "coi/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

namespace coi {

using json = nlohmann::json;

std::size_t ConfusionMatrix::gold_total(PatientCode c) const {
    std::size_t n = 0;
    for (std::size_t p = 0; p < 3; ++p) n += counts_[idx(c)][p];
    return n;
}

std::size_t ConfusionMatrix::predicted_total(PatientCode c) const {
    std::size_t n = 0;
    for (std::size_t g = 0; g < 3; ++g) n += counts_[g][idx(c)];
    return n;
}

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts_)
        for (std::size_t v : row) n += v;
    return n;
}

std::size_t ConfusionMatrix::trace() const { return counts_[0][0] + counts_[1][1] + counts_[2][2]; }

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

void compute_scores(EvalReport& r) {
    const ConfusionMatrix& cm = r.confusion;
    r.n_scored = cm.total();
    double f1_sum = 0.0;
    std::size_t present = 0;
    for (PatientCode c : kPatientCodes) {
        ClassScores& s = r.per_class[static_cast<std::size_t>(c)];
        const std::size_t tp = cm.at(c, c);
        s.precision = ratio(tp, cm.predicted_total(c));
        s.recall = ratio(tp, cm.gold_total(c));
        s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
        s.present = cm.gold_total(c) + cm.predicted_total(c) > 0;
        if (s.present) {
            f1_sum += s.f1;
            ++present;
        }
    }
    if (r.n_scored == 0) {
        r.micro_f1.reset();
        r.macro_f1.reset();
        return;
    }
    r.micro_f1 = ratio(cm.trace(), r.n_scored);
    r.macro_f1 = f1_sum / static_cast<double>(present);
}

EvalReport score(std::span<const PredictionRecord> predictions, const std::map<WindowId, PatientCode>& golds) {
    EvalReport r;
    if (!predictions.empty()) {
        r.method = predictions.front().method;
        r.model_id = predictions.front().model_id;
    }
    std::set<WindowId> seen;
    for (const auto& p : predictions) {
        if (p.method != r.method || p.model_id != r.model_id) {
            throw IdentityMismatch("records from different methods or models in one score() call");
        }
        if (!seen.insert(p.window).second) {
            throw IdentityMismatch("window " + p.window.to_string() + " predicted more than once");
        }
        if (p.provenance == Provenance::Excluded) {
            ++r.n_excluded;
            continue;
        }
        const auto gold = golds.find(p.window);
        if (gold == golds.end()) throw IdentityMismatch("no gold label for window " + p.window.to_string());
        if (!p.predicted) throw IdentityMismatch("scored record without prediction: " + p.window.to_string());
        r.confusion.add(gold->second, code_of_valence(*p.predicted));
        if (p.provenance == Provenance::RandomFallback) ++r.n_fallback;
    }
    compute_scores(r);
    return r;
}

EvalReport score(std::span<const PredictionRecord> predictions) {
    std::map<WindowId, PatientCode> golds;
    for (const auto& p : predictions) golds.emplace(p.window, p.gold);
    return score(predictions, golds);
}

std::vector<EvalReport> score_grouped(std::span<const PredictionRecord> predictions) {
    std::vector<std::pair<MethodId, std::string>> keys;
    std::vector<std::vector<PredictionRecord>> groups;
    for (const auto& p : predictions) {
        auto it = std::find(keys.begin(), keys.end(), std::make_pair(p.method, p.model_id));
        if (it == keys.end()) {
            keys.emplace_back(p.method, p.model_id);
            groups.emplace_back();
            it = keys.end() - 1;
        }
        groups[static_cast<std::size_t>(it - keys.begin())].push_back(p);
    }
    std::vector<EvalReport> out;
    for (const auto& g : groups) out.push_back(score(g));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string pct(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
    return buf;
}

std::string pad_left(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

json report_record(const EvalReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json per_class = json::object();
    json confusion = json::array();
    for (PatientCode g : kPatientCodes) {
        const ClassScores& s = r.per_class[static_cast<std::size_t>(g)];
        per_class[std::string(to_string(g))] = {
            {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"present", s.present}};
        json row = json::array();
        for (PatientCode p : kPatientCodes) row.push_back(r.confusion.at(g, p));
        confusion.push_back(std::move(row));
    }
    return {
        {"method", to_string(r.method)},
        {"model", r.model_id},
        {"micro_f1", opt(r.micro_f1)},
        {"macro_f1", opt(r.macro_f1)},
        {"n_scored", r.n_scored},
        {"n_excluded", r.n_excluded},
        {"n_fallback", r.n_fallback},
        {"per_class", std::move(per_class)},
        {"confusion", std::move(confusion)},
    };
}

}  // namespace

FormattedReport format_report(std::span<const EvalReport> reports) {
    std::vector<MethodId> methods;
    std::vector<std::string> models;
    for (const auto& r : reports) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
        if (std::find(models.begin(), models.end(), r.model_id) == models.end()) models.push_back(r.model_id);
    }
    const bool with_average = models.size() > 1;

    auto find = [&](MethodId m, const std::string& model) -> const EvalReport* {
        for (const auto& r : reports)
            if (r.method == m && r.model_id == model) return &r;
        return nullptr;
    };

    constexpr std::size_t kNum = 8;  // width of "Micro-F1"
    std::size_t first_col = std::string("Methods (%)").size();
    for (MethodId m : methods) first_col = std::max(first_col, display_name(m).size());

    std::vector<std::string> groups = models;
    if (with_average) groups.emplace_back("Average");
    std::vector<std::size_t> widths;
    for (const auto& g : groups) widths.push_back(std::max(2 * kNum + 1, g.size()));

    std::string table;
    table += pad_right("Methods (%)", first_col);
    for (std::size_t i = 0; i < groups.size(); ++i) table += " | " + pad_right(groups[i], widths[i]);
    table += "\n" + std::string(first_col, ' ');
    for (std::size_t i = 0; i < groups.size(); ++i) {
        table += " | " + pad_right(pad_left("Micro-F1", kNum) + " " + pad_left("Macro-F1", widths[i] - kNum - 1),
                                   widths[i]);
    }
    table += "\n";

    for (MethodId m : methods) {
        table += pad_right(std::string(display_name(m)), first_col);
        double micro_sum = 0.0, macro_sum = 0.0;
        std::size_t micro_n = 0, macro_n = 0;
        for (std::size_t i = 0; i < models.size(); ++i) {
            const EvalReport* r = find(m, models[i]);
            const std::optional<double> micro = r ? r->micro_f1 : std::nullopt;
            const std::optional<double> macro = r ? r->macro_f1 : std::nullopt;
            if (micro) micro_sum += *micro, ++micro_n;
            if (macro) macro_sum += *macro, ++macro_n;
            table += " | " + pad_left(r ? pct(micro) : "-", kNum) + " " +
                     pad_left(r ? pct(macro) : "-", widths[i] - kNum - 1);
        }
        if (with_average) {
            const std::optional<double> micro_avg =
                micro_n ? std::optional<double>(micro_sum / static_cast<double>(micro_n)) : std::nullopt;
            const std::optional<double> macro_avg =
                macro_n ? std::optional<double>(macro_sum / static_cast<double>(macro_n)) : std::nullopt;
            table += " | " + pad_left(pct(micro_avg), kNum) + " " + pad_left(pct(macro_avg), widths.back() - kNum - 1);
        }
        table += "\n";
    }

    std::string records;
    for (const auto& r : reports) records += report_record(r).dump() + "\n";
    return {std::move(table), std::move(records)};
}

}  // namespace coi
