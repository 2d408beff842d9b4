#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "msx/dataset.hpp"

namespace msx {

// Monotone 1-D classifier on event count: class k for counts in [lower[k], lower[k+1]).
// lower[0] is -inf; an empty class has lower[k] == lower[k+1].
struct CountThresholds {
    std::array<double, kNumClasses> lower{};

    int predict(std::uint64_t count) const;
};

// Exact maximum-training-accuracy boundaries over all monotone assignments of
// contiguous count ranges to classes 0..6; cuts sit midway between distinct counts.
CountThresholds fit_count_thresholds(std::span<const std::uint64_t> counts, std::span<const int> labels);

double threshold_accuracy(const CountThresholds& clf, std::span<const std::uint64_t> counts,
                          std::span<const int> labels);

struct ProbeSide {
    CountThresholds thresholds;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    int train_samples = 0;
    int test_samples = 0;
};

struct ProbeReport {
    ProbeSide pre;   // without count-overlap resampling
    ProbeSide post;  // with it
};

// Fits on the train split, scores on the test split. `pre` must be a dataset built
// without resampling; DomainError if it is absent, resampled, or unsplit.
ProbeSide probe_manifest(const DatasetManifest& manifest, std::optional<Eye> eye = std::nullopt);
ProbeReport count_bias_probe(const std::optional<DatasetManifest>& pre, const DatasetManifest& post,
                             std::optional<Eye> eye = std::nullopt);

std::string format_probe_text(const ProbeReport& report);
void write_probe_csv(const ProbeReport& report, const std::filesystem::path& path);

}  // namespace msx
