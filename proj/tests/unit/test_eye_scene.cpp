#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "msx/errors.hpp"
#include "msx/eye_scene.hpp"

#include <nlohmann/json.hpp>

namespace msx {
namespace {

struct TableRow {
    double nominal;
    int frames;
    double amp_lo, amp_hi, dur_lo, dur_hi;
};

// Reference class table: frame counts, angle and time ranges.
constexpr TableRow kReference[kNumClasses] = {
    {0.50, 7, 0.000, 0.625, 0.25, 0.75},  {0.75, 9, 0.625, 0.875, 0.50, 1.00},
    {1.00, 11, 0.875, 1.125, 0.75, 1.25}, {1.25, 13, 1.125, 1.375, 1.00, 1.50},
    {1.50, 15, 1.375, 1.625, 1.25, 1.75}, {1.75, 17, 1.625, 1.875, 1.50, 2.00},
    {2.00, 19, 1.875, 2.125, 1.75, 2.25},
};

TEST(ClassTable, MatchesReferenceValues) {
    const ClassTable& t = default_class_table();
    for (int c = 0; c < kNumClasses; ++c) {
        EXPECT_EQ(t[c].class_id, c);
        EXPECT_DOUBLE_EQ(t[c].nominal_amplitude_deg, kReference[c].nominal);
        EXPECT_EQ(t[c].frame_count, kReference[c].frames);
        EXPECT_DOUBLE_EQ(t[c].amplitude_lo_deg, kReference[c].amp_lo);
        EXPECT_DOUBLE_EQ(t[c].amplitude_hi_deg, kReference[c].amp_hi);
        EXPECT_DOUBLE_EQ(t[c].duration_lo_ms, kReference[c].dur_lo);
        EXPECT_DOUBLE_EQ(t[c].duration_hi_ms, kReference[c].dur_hi);
    }
}

TEST(ClassTable, FrameCountsOddAndDurationsOverlap) {
    const ClassTable& t = default_class_table();
    for (int c = 0; c < kNumClasses; ++c) {
        EXPECT_EQ(t[c].frame_count % 2, 1);
        if (c + 1 < kNumClasses) {
            EXPECT_GT(t[c].duration_hi_ms, t[c + 1].duration_lo_ms);
        }
    }
    EXPECT_NO_THROW(validate_class_table(t));
}

TEST(ClassTable, ValidationRejectsBrokenTables) {
    ClassTable even = default_class_table();
    even[3].frame_count = 12;
    EXPECT_THROW(validate_class_table(even), DomainError);

    ClassTable gap = default_class_table();
    gap[2].duration_hi_ms = 0.9;  // no longer reaches class 3's lower bound of 1.0
    EXPECT_THROW(validate_class_table(gap), DomainError);
}

TEST(Trajectory, SmallestClassFrameCountAndDuration) {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const Trajectory tr = make_trajectory(0, rng);
        EXPECT_EQ(tr.frame_count, 7);
        EXPECT_GE(tr.duration_ms, 0.25);
        EXPECT_LE(tr.duration_ms, 0.75);
    }
}

TEST(Trajectory, LargestClassAmplitudeHalfOpen) {
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
        const Trajectory tr = make_trajectory(6, rng);
        EXPECT_EQ(tr.frame_count, 19);
        EXPECT_GE(tr.peak_amplitude_deg, 1.875);
        EXPECT_LT(tr.peak_amplitude_deg, 2.125);
    }
}

TEST(Trajectory, FixedSeedRepeats) {
    Rng a(42);
    Rng b(42);
    const Trajectory x = make_trajectory(2, a);
    const Trajectory y = make_trajectory(2, b);
    EXPECT_EQ(x.peak_amplitude_deg, y.peak_amplitude_deg);
    EXPECT_EQ(x.duration_ms, y.duration_ms);
    EXPECT_EQ(x.direction, y.direction);
    EXPECT_EQ(x.frame_count, y.frame_count);
}

TEST(Trajectory, BothDirectionsDrawn) {
    Rng rng(5);
    int right = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        const Trajectory tr = make_trajectory(i % kNumClasses, rng);
        ASSERT_TRUE(tr.direction == 1 || tr.direction == -1);
        right += tr.direction == 1;
    }
    // binomial(2000, 0.5): sd ~ 22.4
    EXPECT_NEAR(right, n / 2, 5 * 22.4);
}

TEST(Trajectory, InvalidClassRejected) {
    Rng rng(1);
    EXPECT_THROW(make_trajectory(-1, rng), DomainError);
    EXPECT_THROW(make_trajectory(7, rng), DomainError);
}

TEST(AngleAt, BoundaryPeakAndSymmetry) {
    Trajectory tr;
    tr.class_id = 2;
    tr.peak_amplitude_deg = 1.05;
    tr.duration_ms = 1.1;
    tr.direction = -1;
    tr.frame_count = 11;
    EXPECT_EQ(angle_at(tr, 0.0), 0.0);
    EXPECT_NEAR(angle_at(tr, tr.duration_ms), 0.0, 1e-15);
    EXPECT_NEAR(angle_at(tr, tr.duration_ms / 2), -1.05, 1e-12);
    EXPECT_NEAR(std::abs(angle_at(tr, tr.duration_ms / 4)), std::abs(angle_at(tr, 3 * tr.duration_ms / 4)), 1e-12);
    for (int i = 0; i <= 100; ++i) {
        EXPECT_LE(std::abs(angle_at(tr, tr.duration_ms * i / 100.0)), tr.peak_amplitude_deg + 1e-12);
    }
    EXPECT_THROW(angle_at(tr, -1e-9), DomainError);
    EXPECT_THROW(angle_at(tr, tr.duration_ms + 1e-6), DomainError);
}

TEST(AngleAt, QuarterPointIsHalfPeakForRaisedCosine) {
    // 0.5 (1 - cos(2 pi t / d)) at t = d/4 gives exactly half the peak.
    Trajectory tr;
    tr.peak_amplitude_deg = 2.0;
    tr.duration_ms = 2.0;
    tr.direction = 1;
    tr.frame_count = 19;
    EXPECT_NEAR(angle_at(tr, 0.5), 1.0, 1e-12);
}

TEST(Render, DeterministicAndBounded) {
    const EyeScene scene = EyeScene::desk();
    const IntensityGrid a = render_frame(scene, 0.0);
    const IntensityGrid b = render_frame(scene, 0.0);
    EXPECT_EQ(a, b);
    for (float v : a.pixels) {
        EXPECT_GE(v, 0.0F);
        EXPECT_LE(v, 1.0F);
    }
    EXPECT_EQ(a.width, 200);
    EXPECT_EQ(a.height, 150);
}

IntensityGrid hflip(const IntensityGrid& g) {
    IntensityGrid out(g.width, g.height);
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            out.at(g.width - 1 - x, y) = g.at(x, y);
        }
    }
    return out;
}

TEST(Render, OppositeAnglesMirror) {
    const EyeScene scene = EyeScene::desk();
    for (double a : {0.3, 1.0, 2.1}) {
        EXPECT_EQ(render_frame(scene, a), hflip(render_frame(scene, -a))) << a;
    }
}

TEST(Render, SubPixelSensitivity) {
    const EyeScene scene = EyeScene::desk();
    EXPECT_NE(render_frame(scene, 0.1), render_frame(scene, 0.0));
    EXPECT_NE(render_frame(scene, -0.1), render_frame(scene, 0.0));
}

TEST(Render, RejectsExcessiveAngle) {
    EXPECT_THROW(render_frame(EyeScene::desk(), 5.5), DomainError);
}

TEST(Render, SceneValidation) {
    EyeScene s = EyeScene::desk();
    s.pupil_radius_mm = 6.0;  // bigger than the iris
    EXPECT_THROW(s.validate(), DomainError);
    s = EyeScene::desk();
    s.supersampling = 0;
    EXPECT_THROW(s.validate(), DomainError);
}

// Darkness-weighted horizontal centroid (pixels), restricted to a disc that lies inside
// the eyeball silhouette so the static background does not dilute it.
double dark_centroid(const IntensityGrid& g, double sclera, double radius) {
    double s = 0.0;
    double m = 0.0;
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const double u = x + 0.5 - g.width / 2.0;
            const double v = y + 0.5 - g.height / 2.0;
            if (u * u + v * v > radius * radius) {
                continue;
            }
            const double w = std::max(0.0, sclera - g.at(x, y));
            s += w * u;
            m += w;
        }
    }
    return s / m;
}

// Same quantity integrated over the sphere surface instead of the image: the iris
// and pupil caps are parameterized on the rotated eyeball, projected through the
// pinhole, and weighted by their image-area element f^2 |n.P| / Z^3.
double projected_cap_centroid(const EyeScene& s, double angle_deg) {
    const double th = angle_deg * std::numbers::pi / 180.0;
    const double r = s.eyeball_radius_mm;
    const double phi_iris = std::asin(s.iris_radius_mm / r);
    const double phi_pupil = std::asin(s.pupil_radius_mm / r);
    const int n = 600;
    double su = 0.0;
    double sm = 0.0;
    for (int i = 0; i < n; ++i) {
        const double phi = (i + 0.5) / n * phi_iris;
        const double w = phi < phi_pupil ? s.sclera_intensity - s.pupil_intensity : s.sclera_intensity - s.iris_intensity;
        for (int j = 0; j < n; ++j) {
            const double psi = (j + 0.5) / n * 2.0 * std::numbers::pi;
            const double ex = std::sin(phi) * std::cos(psi);
            const double ey = std::sin(phi) * std::sin(psi);
            const double ez = -std::cos(phi);
            const double dx = ex * std::cos(th) - ez * std::sin(th);
            const double dz = ex * std::sin(th) + ez * std::cos(th);
            const double X = r * dx;
            const double Y = r * ey;
            const double Z = s.camera_distance_mm + r * dz;
            const double area = std::abs(dx * X + ey * Y + dz * Z) / (Z * Z * Z) * r * r * std::sin(phi);
            const double u = s.focal_length_mm * X / Z / s.pixel_pitch_mm();
            su += w * u * area;
            sm += w * area;
        }
    }
    return su / sm;
}

TEST(Render, IrisCentroidShiftMatchesProjection) {
    for (const EyeScene& scene : {EyeScene::desk(), EyeScene::full()}) {
        const double radius = 40.0 * scene.width / 200.0;
        const double measured = dark_centroid(render_frame(scene, 0.5), scene.sclera_intensity, radius) -
                                dark_centroid(render_frame(scene, 0.0), scene.sclera_intensity, radius);
        const double expected = projected_cap_centroid(scene, 0.5) - projected_cap_centroid(scene, 0.0);
        EXPECT_GT(measured, 0.0);
        EXPECT_GT(expected, 0.0);
        EXPECT_NEAR(measured, expected, 0.1 * expected) << scene.width;
    }
}

TEST(Sequence, FrameCountTimestampsAndReturn) {
    Rng rng(3);
    const Trajectory tr = make_trajectory(2, rng);
    const FrameSequence seq = render_sequence(EyeScene::desk(), tr);
    ASSERT_EQ(seq.frames.size(), 11U);
    ASSERT_EQ(seq.timestamps_ns.size(), 11U);
    EXPECT_EQ(seq.frames.front(), seq.frames.back());
    EXPECT_EQ(seq.timestamps_ns.front(), 0);
    EXPECT_EQ(seq.timestamps_ns.back(), tr.duration_ns());
    for (std::size_t i = 1; i < seq.timestamps_ns.size(); ++i) {
        EXPECT_GT(seq.timestamps_ns[i], seq.timestamps_ns[i - 1]);
    }
    // Peak frame sits in the middle and differs from the rest pose.
    EXPECT_EQ(seq.frames[5], render_frame(EyeScene::desk(), angle_at(tr, tr.duration_ms / 2)));
    EXPECT_NE(seq.frames[5], seq.frames[0]);
}

TEST(Sequence, Deterministic) {
    Rng a(77);
    Rng b(77);
    const FrameSequence x = render_sequence(EyeScene::desk(), make_trajectory(4, a));
    const FrameSequence y = render_sequence(EyeScene::desk(), make_trajectory(4, b));
    EXPECT_EQ(x.frames, y.frames);
    EXPECT_EQ(x.timestamps_ns, y.timestamps_ns);
}

TEST(SceneConfig, JsonRoundTrip) {
    SceneConfig c;
    c.scene.width = 120;
    c.scene.height = 90;
    c.classes[1].duration_hi_ms = 1.05;
    const SceneConfig back = scene_config_from_json(to_json(c));
    EXPECT_EQ(back.scene.width, 120);
    EXPECT_EQ(back.scene.height, 90);
    EXPECT_DOUBLE_EQ(back.classes[1].duration_hi_ms, 1.05);
}

}  // namespace
}  // namespace msx
