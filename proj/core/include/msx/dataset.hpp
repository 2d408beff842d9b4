#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msx/dvs_sim.hpp"
#include "msx/eye_scene.hpp"
#include "msx/sample.hpp"

namespace msx {

struct Roi {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;

    bool operator==(const Roi&) const = default;
};

// Centered 0.55 W x 0.5 H window (440x300 of 800x600).
Roi center_roi(int sensor_width, int sensor_height);

EventStream crop_to_roi(const EventStream& stream, const Roi& roi);

// Optional starting point for a trajectory: keeps amplitude and direction, redraws the
// duration. Only the first attempt uses it; retries draw whole new trajectories.
struct TrajectoryHint {
    double peak_amplitude_deg = 0.0;
    int direction = 1;
};

inline constexpr int kSampleRetries = 3;

// Render, simulate and crop one sample. Right-eye samples are the mirror of the
// left-eye build from the same seed. A sample that yields no events is redrawn up to
// kSampleRetries times before GenerationError.
LabeledSample build_sample(int class_id, Eye eye, const SceneConfig& scene, const SimulatorConfig& sim,
                           std::uint64_t seed, std::optional<TrajectoryHint> hint = std::nullopt);

// x' = width - 1 - x; left-eye samples only.
LabeledSample mirror_sample(const LabeledSample& sample);

// Raw event counts per class from a calibration pass.
struct CountCalibration {
    std::array<std::vector<std::uint64_t>, kNumClasses> counts;

    void add(int class_id, std::uint64_t count);
    void finalize();  // sorts each class
};

struct CountInterval {
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;
};

// Linear-interpolated quantile of a sorted sample.
double quantile_sorted(const std::vector<std::uint64_t>& sorted, double q);

// Interval for class c: [q25(c-1 u c), q75(c u c+1)], floored / ceiled to integers and
// clamped to >= 1. Adjacent intervals share the pooled class pair, so they intersect.
CountInterval count_interval(int class_id, const CountCalibration& calibration);

std::uint64_t target_count_for(int class_id, const CountCalibration& calibration, Rng& rng);

// Uniform subsample without replacement down to target_count; unchanged if the
// stream is already at or below target.
LabeledSample resample_counts(const LabeledSample& sample, std::uint64_t target_count, Rng& rng);

enum class Split : std::uint8_t { Unassigned, Train, Val, Test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct SampleRecord {
    std::string path;  // relative to the dataset root
    int class_id = 0;
    Eye eye = Eye::Left;
    double peak_amplitude_deg = 0.0;
    std::int64_t duration_ns = 0;
    std::uint64_t raw_event_count = 0;
    std::uint64_t resampled_event_count = 0;
    std::uint64_t seed = 0;
    std::uint64_t source_seed = 0;  // rendered sequence this sample was resampled from
    std::string digest;             // sha256 of the file
    Split split = Split::Unassigned;
};

inline constexpr int kManifestSchemaVersion = 1;

struct DatasetManifest {
    int schema_version = kManifestSchemaVersion;
    int sensor_width = 0;
    int sensor_height = 0;
    Roi roi;
    std::uint64_t global_seed = 0;
    bool resampled = true;
    nlohmann::json config;  // generation settings, informational
    std::vector<SampleRecord> samples;

    // sha256 over the sorted sample records, split assignment excluded.
    std::string content_digest() const;

    std::vector<const SampleRecord*> select(Split split, std::optional<Eye> eye = std::nullopt) const;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct DatasetConfig {
    SceneConfig scene;
    SimulatorConfig sim;
    int base_instances = 4;          // B, per class
    int durations_per_instance = 5;  // D
    int resamples_per_sequence = 5;  // R
    bool resample = true;            // count-overlap resampling on/off
    bool right_eye = true;
    std::uint64_t seed = 1;
    int workers = 1;

    static DatasetConfig desk();
    static DatasetConfig full();

    void validate() const;
};

DatasetConfig dataset_config_from_json(const nlohmann::json& j, DatasetConfig base = DatasetConfig::desk());
nlohmann::json to_json(const DatasetConfig& config);

inline constexpr const char* kManifestFileName = "manifest.json";

// Writes {eye}/{class}/{seed_hex}.evms under out_dir, caching rendered sequences under
// raw/ so an interrupted build resumes. The manifest is written last.
DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

// Stratified by class and eye, grouping the resamples of one rendered sequence into
// the same split so no rendered motion appears in two splits.
DatasetManifest split_dataset(const DatasetManifest& manifest, double val_fraction, int test_count,
                              std::uint64_t seed);

std::string seed_hex(std::uint64_t seed);

}  // namespace msx
