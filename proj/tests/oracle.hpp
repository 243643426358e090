#pragma once

#include <array>
#include <cstddef>
#include <vector>

// Brute-force scorer used as a reference: counts TP/FP/FN per class by
// walking the label lists, with no confusion matrix involved.
namespace oracle {

struct Scores {
    std::array<double, 3> precision{}, recall{}, f1{};
    std::array<bool, 3> present{};
    double micro = 0.0;
    double macro = 0.0;
    double accuracy = 0.0;
};

inline Scores brute_force(const std::vector<int>& gold, const std::vector<int>& pred) {
    Scores s;
    std::size_t tp_all = 0, fp_all = 0, fn_all = 0, correct = 0;
    double f1_sum = 0.0;
    int n_present = 0;
    for (int c = 0; c < 3; ++c) {
        std::size_t tp = 0, fp = 0, fn = 0;
        bool in_gold = false, in_pred = false;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (gold[i] == c) in_gold = true;
            if (pred[i] == c) in_pred = true;
            if (pred[i] == c && gold[i] == c) ++tp;
            if (pred[i] == c && gold[i] != c) ++fp;
            if (pred[i] != c && gold[i] == c) ++fn;
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
        const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        s.precision[c] = p;
        s.recall[c] = r;
        s.f1[c] = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
        s.present[c] = in_gold || in_pred;
        if (s.present[c]) {
            f1_sum += s.f1[c];
            ++n_present;
        }
    }
    for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i];
    const double mp = static_cast<double>(tp_all) / static_cast<double>(tp_all + fp_all);
    const double mr = static_cast<double>(tp_all) / static_cast<double>(tp_all + fn_all);
    s.micro = mp + mr == 0.0 ? 0.0 : 2.0 * mp * mr / (mp + mr);
    s.macro = n_present == 0 ? 0.0 : f1_sum / n_present;
    s.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
    return s;
}

}  // namespace oracle
