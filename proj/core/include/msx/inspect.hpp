#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msx/dataset.hpp"

namespace msx {

inline constexpr int kHistogramBins = 10;

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::array<int, kHistogramBins> counts{};
};

struct ClassStats {
    int class_id = 0;
    std::array<int, 2> per_eye{};  // left, right
    std::uint64_t min_events = 0;
    std::uint64_t max_events = 0;
    double mean_events = 0.0;
    double min_duration_ms = 0.0;
    double max_duration_ms = 0.0;
    Histogram event_hist;     // shared edges across classes
    Histogram duration_hist;  // shared edges across classes
};

struct InvariantCheck {
    std::string name;
    bool passed = true;
    std::string detail;
};

struct InspectReport {
    std::size_t samples = 0;
    std::array<ClassStats, kNumClasses> classes{};
    std::vector<InvariantCheck> checks;

    bool ok() const;
};

// Statistics and invariant checks. With verify_files, every sample file must exist
// and match its recorded digest, else IntegrityError.
InspectReport inspect_dataset(const DatasetManifest& manifest, const std::filesystem::path& root, bool verify_files,
                              int workers = 1);

std::string format_inspect_text(const InspectReport& report);
void write_inspect_csv(const InspectReport& report, const std::filesystem::path& stats_path,
                       const std::filesystem::path& checks_path);

}  // namespace msx
