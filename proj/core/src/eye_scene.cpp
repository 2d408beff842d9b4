#include "msx/eye_scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "msx/errors.hpp"

namespace msx {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kMaxRenderAngleDeg = 5.0;

// Angle at a normalized time in [0, 1].
double profile_at_fraction(const Trajectory& traj, double fraction) {
    if (fraction <= 0.0 || fraction >= 1.0) {
        return 0.0;
    }
    const double shape = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * fraction));
    return traj.direction * traj.peak_amplitude_deg * shape;
}

}  // namespace

const ClassTable& default_class_table() {
    static const ClassTable table = {{
        {0, 0.50, 7, 0.000, 0.625, 0.25, 0.75},
        {1, 0.75, 9, 0.625, 0.875, 0.50, 1.00},
        {2, 1.00, 11, 0.875, 1.125, 0.75, 1.25},
        {3, 1.25, 13, 1.125, 1.375, 1.00, 1.50},
        {4, 1.50, 15, 1.375, 1.625, 1.25, 1.75},
        {5, 1.75, 17, 1.625, 1.875, 1.50, 2.00},
        {6, 2.00, 19, 1.875, 2.125, 1.75, 2.25},
    }};
    return table;
}

void validate_class_table(const ClassTable& table) {
    for (int c = 0; c < kNumClasses; ++c) {
        const ClassSpec& s = table[c];
        const std::string tag = "class " + std::to_string(c) + ": ";
        if (s.class_id != c) {
            throw DomainError(tag + "class ids must be 0..6 in order");
        }
        if (s.frame_count < 3 || s.frame_count % 2 == 0) {
            throw DomainError(tag + "frame_count must be odd and >= 3");
        }
        if (!(s.amplitude_lo_deg >= 0.0 && s.amplitude_lo_deg < s.amplitude_hi_deg)) {
            throw DomainError(tag + "bad amplitude range");
        }
        if (!(s.duration_lo_ms > 0.0 && s.duration_lo_ms <= s.duration_hi_ms)) {
            throw DomainError(tag + "bad duration range");
        }
        if (c + 1 < kNumClasses && !(s.duration_hi_ms > table[c + 1].duration_lo_ms)) {
            throw DomainError(tag + "duration range must overlap the next class");
        }
    }
}

std::int64_t Trajectory::duration_ns() const {
    return std::llround(duration_ms * 1.0e6);
}

Trajectory make_trajectory(int class_id, Rng& rng, const ClassTable& table) {
    if (class_id < 0 || class_id >= kNumClasses) {
        throw DomainError("class_id out of range: " + std::to_string(class_id));
    }
    const ClassSpec& spec = table[class_id];
    std::uniform_real_distribution<double> amplitude(spec.amplitude_lo_deg, spec.amplitude_hi_deg);
    std::uniform_real_distribution<double> duration(spec.duration_lo_ms, spec.duration_hi_ms);
    std::bernoulli_distribution rightward(0.5);

    Trajectory traj;
    traj.class_id = class_id;
    traj.peak_amplitude_deg = amplitude(rng);
    traj.duration_ms = duration(rng);
    traj.direction = rightward(rng) ? 1 : -1;
    traj.frame_count = spec.frame_count;
    return traj;
}

double angle_at(const Trajectory& trajectory, double t_ms) {
    if (!(t_ms >= 0.0 && t_ms <= trajectory.duration_ms)) {
        throw DomainError("angle_at: t outside [0, duration]");
    }
    return profile_at_fraction(trajectory, t_ms / trajectory.duration_ms);
}

EyeScene EyeScene::desk() {
    return EyeScene{};
}

EyeScene EyeScene::full() {
    EyeScene s;
    s.width = 800;
    s.height = 600;
    s.supersampling = 2;
    return s;
}

void EyeScene::validate() const {
    if (width <= 0 || height <= 0 || width > 65535 || height > 65535) {
        throw DomainError("scene: bad sensor size");
    }
    if (!(pupil_radius_mm > 0.0 && pupil_radius_mm < iris_radius_mm &&
          iris_radius_mm < eyeball_radius_mm)) {
        throw DomainError("scene: need 0 < pupil < iris < eyeball radius");
    }
    for (double v : {sclera_intensity, iris_intensity, pupil_intensity, background_intensity}) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DomainError("scene: intensities must lie in [0, 1]");
        }
    }
    if (!(focal_length_mm > 0.0 && sensor_width_mm > 0.0 &&
          camera_distance_mm > eyeball_radius_mm)) {
        throw DomainError("scene: camera must sit outside the eyeball");
    }
    if (supersampling < 1) {
        throw DomainError("scene: supersampling must be >= 1");
    }
}

IntensityGrid render_frame(const EyeScene& scene, double angle_deg) {
    scene.validate();
    if (!(std::abs(angle_deg) <= kMaxRenderAngleDeg)) {
        throw DomainError("render_frame: |angle| must be <= 5 degrees");
    }

    const double theta = angle_deg * kDegToRad;
    const double sin_t = std::sin(theta);
    const double cos_t = std::cos(theta);
    const double pitch = scene.pixel_pitch_mm();
    const double f = scene.focal_length_mm;
    const double dist = scene.camera_distance_mm;
    const double r = scene.eyeball_radius_mm;
    const double c_minus_r = dist * dist - r * r;
    const double iris2 = scene.iris_radius_mm * scene.iris_radius_mm;
    const double pupil2 = scene.pupil_radius_mm * scene.pupil_radius_mm;
    const int ss = scene.supersampling;
    const double half_w = 0.5 * scene.width;
    const double half_h = 0.5 * scene.height;

    // Material of a sample: 0 background, 1 sclera, 2 iris, 3 pupil. Counting samples
    // per material keeps the box filter independent of summation order, so mirrored
    // scenes render bit-identically.
    auto classify = [&](double u, double v) -> int {
        const double dx = u * pitch;
        const double dy = v * pitch;
        const double dd = dx * dx + dy * dy + f * f;
        const double dc = f * dist;
        const double disc = dc * dc - dd * c_minus_r;
        if (disc < 0.0) {
            return 0;
        }
        const double t = (dc - std::sqrt(disc)) / dd;
        const double lx = t * dx;
        const double ly = t * dy;
        const double lz = t * f - dist;
        // Front pole of the rotated eye points at (sin, 0, -cos).
        if (lx * sin_t - lz * cos_t <= 0.0) {
            return 1;
        }
        const double ex = lx * cos_t + lz * sin_t;
        const double rho2 = ex * ex + ly * ly;
        if (rho2 < pupil2) {
            return 3;
        }
        if (rho2 < iris2) {
            return 2;
        }
        return 1;
    };

    const std::array<double, 4> level = {scene.background_intensity, scene.sclera_intensity,
                                         scene.iris_intensity, scene.pupil_intensity};
    const double norm = 1.0 / (ss * ss);

    IntensityGrid out(scene.width, scene.height);
    for (int py = 0; py < scene.height; ++py) {
        for (int px = 0; px < scene.width; ++px) {
            std::array<int, 4> counts{};
            for (int j = 0; j < ss; ++j) {
                const double v = py + (j + 0.5) / ss - half_h;
                for (int i = 0; i < ss; ++i) {
                    const double u = px + (i + 0.5) / ss - half_w;
                    ++counts[classify(u, v)];
                }
            }
            double value = 0.0;
            for (int k = 0; k < 4; ++k) {
                value += counts[k] * level[k];
            }
            out.at(px, py) = static_cast<float>(std::clamp(value * norm, 0.0, 1.0));
        }
    }
    return out;
}

FrameSequence render_sequence(const EyeScene& scene, const Trajectory& trajectory) {
    if (trajectory.frame_count < 2) {
        throw DomainError("render_sequence: need at least two frames");
    }
    const int n = trajectory.frame_count;
    const std::int64_t dur = trajectory.duration_ns();
    FrameSequence seq;
    seq.frames.reserve(n);
    seq.timestamps_ns.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double fraction = static_cast<double>(i) / (n - 1);
        seq.timestamps_ns.push_back(dur * i / (n - 1));
        seq.frames.push_back(render_frame(scene, profile_at_fraction(trajectory, fraction)));
    }
    return seq;
}

void write_pgm(const IntensityGrid& grid, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string());
    }
    out << "P5\n" << grid.width << ' ' << grid.height << "\n255\n";
    for (float v : grid.pixels) {
        const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0F, 1.0F) * 255.0F));
        out.put(static_cast<char>(byte));
    }
}

SceneConfig scene_config_from_json(const nlohmann::json& j, SceneConfig base) {
    if (j.contains("scene")) {
        const auto& s = j.at("scene");
        EyeScene& e = base.scene;
        e.width = s.value("width", e.width);
        e.height = s.value("height", e.height);
        e.eyeball_radius_mm = s.value("eyeball_radius_mm", e.eyeball_radius_mm);
        e.iris_radius_mm = s.value("iris_radius_mm", e.iris_radius_mm);
        e.pupil_radius_mm = s.value("pupil_radius_mm", e.pupil_radius_mm);
        e.sclera_intensity = s.value("sclera_intensity", e.sclera_intensity);
        e.iris_intensity = s.value("iris_intensity", e.iris_intensity);
        e.pupil_intensity = s.value("pupil_intensity", e.pupil_intensity);
        e.background_intensity = s.value("background_intensity", e.background_intensity);
        e.focal_length_mm = s.value("focal_length_mm", e.focal_length_mm);
        e.camera_distance_mm = s.value("camera_distance_mm", e.camera_distance_mm);
        e.sensor_width_mm = s.value("sensor_width_mm", e.sensor_width_mm);
        e.supersampling = s.value("supersampling", e.supersampling);
    }
    if (j.contains("classes")) {
        const auto& rows = j.at("classes");
        if (!rows.is_array() || rows.size() != kNumClasses) {
            throw DomainError("config: 'classes' must list exactly 7 rows");
        }
        for (int c = 0; c < kNumClasses; ++c) {
            const auto& row = rows[c];
            ClassSpec& spec = base.classes[c];
            spec.class_id = row.value("class_id", c);
            spec.nominal_amplitude_deg = row.value("nominal_amplitude_deg", spec.nominal_amplitude_deg);
            spec.frame_count = row.value("frame_count", spec.frame_count);
            if (row.contains("amplitude_range")) {
                spec.amplitude_lo_deg = row.at("amplitude_range").at(0).get<double>();
                spec.amplitude_hi_deg = row.at("amplitude_range").at(1).get<double>();
            }
            if (row.contains("duration_range_ms")) {
                spec.duration_lo_ms = row.at("duration_range_ms").at(0).get<double>();
                spec.duration_hi_ms = row.at("duration_range_ms").at(1).get<double>();
            }
        }
    }
    base.scene.validate();
    validate_class_table(base.classes);
    return base;
}

nlohmann::json to_json(const SceneConfig& config) {
    const EyeScene& e = config.scene;
    nlohmann::json j;
    j["scene"] = {
        {"width", e.width},
        {"height", e.height},
        {"eyeball_radius_mm", e.eyeball_radius_mm},
        {"iris_radius_mm", e.iris_radius_mm},
        {"pupil_radius_mm", e.pupil_radius_mm},
        {"sclera_intensity", e.sclera_intensity},
        {"iris_intensity", e.iris_intensity},
        {"pupil_intensity", e.pupil_intensity},
        {"background_intensity", e.background_intensity},
        {"focal_length_mm", e.focal_length_mm},
        {"camera_distance_mm", e.camera_distance_mm},
        {"sensor_width_mm", e.sensor_width_mm},
        {"supersampling", e.supersampling},
    };
    nlohmann::json rows = nlohmann::json::array();
    for (const ClassSpec& s : config.classes) {
        rows.push_back({
            {"class_id", s.class_id},
            {"nominal_amplitude_deg", s.nominal_amplitude_deg},
            {"frame_count", s.frame_count},
            {"amplitude_range", {s.amplitude_lo_deg, s.amplitude_hi_deg}},
            {"duration_range_ms", {s.duration_lo_ms, s.duration_hi_ms}},
        });
    }
    j["classes"] = rows;
    return j;
}

SceneConfig load_scene_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path.string());
    }
    return scene_config_from_json(nlohmann::json::parse(in, nullptr, true, true));
}

}  // namespace msx
