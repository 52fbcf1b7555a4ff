#pragma once

// Confusion matrix and macro-averaged scores. Macro F1 is the unweighted mean
// of per-class F1 values, and zero-denominator per-class scores count as 0,
// so a model that never predicts a minority class pays for it.

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "gopnet/errors.hpp"

namespace gopnet {

struct ConfusionMatrix {
    std::vector<std::vector<long>> counts;  // [true][predicted]
    int n_classes = 0;

    long total() const {
        long t = 0;
        for (const auto& row : counts)
            for (long c : row) t += c;
        return t;
    }
};

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 int n_classes) {
    if (truth.size() != predicted.size())
        throw DimensionError("confusion: label vectors differ in length");
    if (n_classes < 1) throw DomainError("confusion: need at least one class");
    ConfusionMatrix cm;
    cm.n_classes = n_classes;
    cm.counts.assign(n_classes, std::vector<long>(n_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= n_classes || predicted[i] < 0 || predicted[i] >= n_classes)
            throw DomainError("confusion: class id out of range at sample " + std::to_string(i));
        ++cm.counts[truth[i]][predicted[i]];
    }
    return cm;
}

struct MacroScores {
    double accuracy = 0.0;   // percentages
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline MacroScores macro_scores(const ConfusionMatrix& cm) {
    const long total = cm.total();
    if (total == 0) throw DomainError("macro_scores: empty confusion matrix");
    const int c = cm.n_classes;
    double sum_p = 0.0, sum_r = 0.0, sum_f1 = 0.0;
    long diag = 0;
    for (int k = 0; k < c; ++k) {
        long row_sum = 0, col_sum = 0;
        for (int j = 0; j < c; ++j) {
            row_sum += cm.counts[k][j];
            col_sum += cm.counts[j][k];
        }
        const long tp = cm.counts[k][k];
        diag += tp;
        const double p = col_sum > 0 ? static_cast<double>(tp) / col_sum : 0.0;
        const double r = row_sum > 0 ? static_cast<double>(tp) / row_sum : 0.0;
        sum_p += p;
        sum_r += r;
        sum_f1 += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    MacroScores s;
    s.accuracy = 100.0 * static_cast<double>(diag) / total;
    s.precision = 100.0 * sum_p / c;
    s.recall = 100.0 * sum_r / c;
    s.f1 = 100.0 * sum_f1 / c;
    return s;
}

// Fixed-width table: one row per entry plus an unrounded mean row.
inline std::string format_report(const std::vector<std::pair<std::string, MacroScores>>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(12) << "split" << std::right << std::setw(10) << "accuracy"
        << std::setw(11) << "precision" << std::setw(8) << "recall" << std::setw(8) << "f1"
        << '\n';
    auto put = [&out](const std::string& name, const MacroScores& s) {
        out << std::left << std::setw(12) << name << std::right << std::fixed
            << std::setprecision(2) << std::setw(10) << s.accuracy << std::setw(11) << s.precision
            << std::setw(8) << s.recall << std::setw(8) << s.f1 << '\n';
        out.unsetf(std::ios::fixed);
    };
    MacroScores mean;
    for (const auto& [name, s] : rows) {
        put(name, s);
        mean.accuracy += s.accuracy;
        mean.precision += s.precision;
        mean.recall += s.recall;
        mean.f1 += s.f1;
    }
    if (rows.size() > 1) {
        const double n = static_cast<double>(rows.size());
        mean.accuracy /= n;
        mean.precision /= n;
        mean.recall /= n;
        mean.f1 /= n;
        put("mean", mean);
    }
    return out.str();
}

}  // namespace gopnet
