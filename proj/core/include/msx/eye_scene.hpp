#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "msx/random.hpp"

namespace msx {

inline constexpr int kNumClasses = 7;

// One row of the microsaccade class table.
struct ClassSpec {
    int class_id = 0;
    double nominal_amplitude_deg = 0.0;
    int frame_count = 0;
    double amplitude_lo_deg = 0.0;  // inclusive
    double amplitude_hi_deg = 0.0;  // exclusive
    double duration_lo_ms = 0.0;
    double duration_hi_ms = 0.0;
};

using ClassTable = std::array<ClassSpec, kNumClasses>;

const ClassTable& default_class_table();

// Throws DomainError unless ids are 0..6 in order, frame counts are odd, ranges are
// well formed and adjacent duration ranges overlap.
void validate_class_table(const ClassTable& table);

// A horizontal out-and-back rotation that returns to its starting gaze.
struct Trajectory {
    int class_id = 0;
    double peak_amplitude_deg = 0.0;
    double duration_ms = 0.0;
    int direction = 1;  // +1 rightward first, -1 leftward first
    int frame_count = 0;

    std::int64_t duration_ns() const;
};

Trajectory make_trajectory(int class_id, Rng& rng, const ClassTable& table = default_class_table());

// Raised-cosine profile: zero at both ends, signed peak at duration/2, zero velocity at
// the endpoints and at the peak.
double angle_at(const Trajectory& trajectory, double t_ms);

struct EyeScene {
    int width = 200;
    int height = 150;
    double eyeball_radius_mm = 12.0;
    double iris_radius_mm = 5.5;
    double pupil_radius_mm = 2.0;
    double sclera_intensity = 0.85;
    double iris_intensity = 0.35;
    double pupil_intensity = 0.05;
    double background_intensity = 0.5;
    double focal_length_mm = 8.0;
    double camera_distance_mm = 40.0;  // camera center to eyeball center
    double sensor_width_mm = 10.0;     // pixel pitch = sensor_width_mm / width
    int supersampling = 4;

    static EyeScene desk();  // 200x150, 4x supersampling
    static EyeScene full();  // 800x600

    void validate() const;
    double pixel_pitch_mm() const { return sensor_width_mm / width; }
};

// Row-major H x W grid of intensities in [0, 1].
struct IntensityGrid {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    IntensityGrid() = default;
    IntensityGrid(int w, int h, float fill = 0.0F)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const IntensityGrid&) const = default;
};

IntensityGrid render_frame(const EyeScene& scene, double angle_deg);

struct FrameSequence {
    std::vector<IntensityGrid> frames;
    std::vector<std::int64_t> timestamps_ns;
};

FrameSequence render_sequence(const EyeScene& scene, const Trajectory& trajectory);

// Binary (P5) 8-bit PGM, for eyeballing renderer output.
void write_pgm(const IntensityGrid& grid, const std::filesystem::path& path);

// Scene geometry plus class table, as read from a JSON configuration file. Missing
// keys keep their defaults.
struct SceneConfig {
    EyeScene scene;
    ClassTable classes = default_class_table();
};

SceneConfig scene_config_from_json(const nlohmann::json& j, SceneConfig base = {});
nlohmann::json to_json(const SceneConfig& config);
SceneConfig load_scene_config(const std::filesystem::path& path);

}  // namespace msx
