#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>

#include "msx/eye_scene.hpp"

namespace msx {

struct ClassMetrics {
    int support = 0;
    double accuracy = 0.0;  // per-class hit rate (equals recall)
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    // confusion[true][predicted]
    std::array<std::array<int, kNumClasses>, kNumClasses> confusion{};
    std::array<ClassMetrics, kNumClasses> per_class{};
    int total = 0;
    double accuracy = 0.0;  // trace / total
    double macro_accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
};

// Precision of a never-predicted class and F1 with p + r = 0 are reported as 0.
MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted);

std::string format_metrics_text(const MetricsReport& report, const std::string& title = {});

// One row per class plus a macro row; the confusion matrix goes to a separate file.
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);
void write_confusion_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace msx
