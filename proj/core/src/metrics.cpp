#include "msx/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "msx/errors.hpp"

namespace msx {

MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) {
        throw DomainError("metrics: truth and prediction lengths differ");
    }
    if (truth.empty()) {
        throw DomainError("metrics: no samples");
    }
    MetricsReport r;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= kNumClasses || predicted[i] < 0 || predicted[i] >= kNumClasses) {
            throw DomainError("metrics: class id out of range");
        }
        ++r.confusion[truth[i]][predicted[i]];
    }
    r.total = static_cast<int>(truth.size());
    int trace = 0;
    for (int k = 0; k < kNumClasses; ++k) {
        trace += r.confusion[k][k];
        int row = 0;
        int col = 0;
        for (int j = 0; j < kNumClasses; ++j) {
            row += r.confusion[k][j];
            col += r.confusion[j][k];
        }
        ClassMetrics& m = r.per_class[k];
        m.support = row;
        m.recall = row > 0 ? static_cast<double>(r.confusion[k][k]) / row : 0.0;
        m.accuracy = m.recall;
        m.precision = col > 0 ? static_cast<double>(r.confusion[k][k]) / col : 0.0;
        m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        r.macro_accuracy += m.accuracy / kNumClasses;
        r.macro_precision += m.precision / kNumClasses;
        r.macro_recall += m.recall / kNumClasses;
        r.macro_f1 += m.f1 / kNumClasses;
    }
    r.accuracy = static_cast<double>(trace) / r.total;
    return r;
}

std::string format_metrics_text(const MetricsReport& r, const std::string& title) {
    std::ostringstream out;
    if (!title.empty()) {
        out << title << '\n';
    }
    out << std::fixed << std::setprecision(4);
    out << "samples " << r.total << "  accuracy " << r.accuracy << "  macro-F1 " << r.macro_f1 << "\n\n";
    out << "class  support  accuracy  precision  recall    f1\n";
    for (int k = 0; k < kNumClasses; ++k) {
        const ClassMetrics& m = r.per_class[k];
        out << std::setw(5) << k << std::setw(9) << m.support << std::setw(10) << m.accuracy << std::setw(11)
            << m.precision << std::setw(8) << m.recall << std::setw(8) << m.f1 << '\n';
    }
    out << "macro" << std::setw(9) << r.total << std::setw(10) << r.macro_accuracy << std::setw(11) << r.macro_precision
        << std::setw(8) << r.macro_recall << std::setw(8) << r.macro_f1 << "\n\nconfusion (rows true, cols predicted)\n";
    out << "     ";
    for (int j = 0; j < kNumClasses; ++j) {
        out << std::setw(6) << j;
    }
    out << '\n';
    for (int k = 0; k < kNumClasses; ++k) {
        out << std::setw(5) << k;
        for (int j = 0; j < kNumClasses; ++j) {
            out << std::setw(6) << r.confusion[k][j];
        }
        out << '\n';
    }
    return out.str();
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string());
    }
    out << std::setprecision(9);
    return out;
}

}  // namespace

void write_metrics_csv(const MetricsReport& r, const std::filesystem::path& path) {
    std::ofstream out = open_csv(path);
    out << "class,support,accuracy,precision,recall,f1\n";
    for (int k = 0; k < kNumClasses; ++k) {
        const ClassMetrics& m = r.per_class[k];
        out << k << ',' << m.support << ',' << m.accuracy << ',' << m.precision << ',' << m.recall << ',' << m.f1 << '\n';
    }
    out << "macro," << r.total << ',' << r.macro_accuracy << ',' << r.macro_precision << ',' << r.macro_recall << ','
        << r.macro_f1 << '\n';
    out << "overall," << r.total << ',' << r.accuracy << ",,,\n";
}

void write_confusion_csv(const MetricsReport& r, const std::filesystem::path& path) {
    std::ofstream out = open_csv(path);
    out << "true";
    for (int j = 0; j < kNumClasses; ++j) {
        out << ",pred_" << j;
    }
    out << '\n';
    for (int k = 0; k < kNumClasses; ++k) {
        out << k;
        for (int j = 0; j < kNumClasses; ++j) {
            out << ',' << r.confusion[k][j];
        }
        out << '\n';
    }
}

}  // namespace msx
