#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msx/dataset.hpp"
#include "msx/metrics.hpp"

namespace msx {

struct EvaluationReport {
    MetricsReport metrics;
    Eye eye = Eye::Left;
    Split split = Split::Test;
    std::vector<std::string> sample_paths;
    std::vector<int> truth;
    std::vector<int> predicted;
    std::vector<double> confidence;  // max class probability
};

// Deterministic inference of a checkpoint over one split of the eye it was trained
// on. DomainError if the checkpoint's input geometry or binning does not fit the
// dataset, or the split is empty.
EvaluationReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                                     const std::filesystem::path& root, Split split, int workers = 1);

void write_predictions_csv(const EvaluationReport& report, const std::filesystem::path& path);

}  // namespace msx
