#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "msx/dataset.hpp"
#include "msx/digest.hpp"
#include "msx/errors.hpp"
#include "msx/evms_io.hpp"
#include "test_support.hpp"

namespace msx {
namespace {

LabeledSample toy_sample(int width = 440, int height = 300, std::size_t n = 50, std::uint64_t seed = 3) {
    LabeledSample s;
    s.stream.width = width;
    s.stream.height = height;
    Rng rng(seed);
    std::uniform_int_distribution<int> xs(0, width - 1);
    std::uniform_int_distribution<int> ys(0, height - 1);
    std::uniform_int_distribution<std::int64_t> ts(0, 2'000'000);
    for (std::size_t i = 0; i < n; ++i) {
        s.stream.events.push_back({ts(rng), static_cast<std::uint16_t>(xs(rng)), static_cast<std::uint16_t>(ys(rng)),
                                   static_cast<std::int8_t>(i % 3 ? 1 : -1)});
    }
    s.stream.canonicalize();
    s.class_id = 4;
    s.peak_amplitude_deg = 1.512;
    s.duration_ns = 1'480'000;
    s.raw_event_count = n;
    s.resampled_event_count = n;
    return s;
}

TEST(Roi, FullAndDeskGeometry) {
    EXPECT_EQ(center_roi(800, 600), (Roi{180, 150, 440, 300}));
    const Roi desk = center_roi(200, 150);
    EXPECT_EQ(desk.width, 110);
    EXPECT_EQ(desk.height, 75);
    EXPECT_EQ(desk.x0, 45);
    EXPECT_EQ(desk.y0, 37);
}

TEST(Roi, CropRebasesAndDrops) {
    EventStream s;
    s.width = 800;
    s.height = 600;
    s.events = {{1, 180, 150, 1}, {2, 619, 449, -1}, {3, 179, 200, 1}, {4, 620, 200, 1}, {5, 300, 449, 1}};
    const EventStream c = crop_to_roi(s, center_roi(800, 600));
    EXPECT_EQ(c.width, 440);
    EXPECT_EQ(c.height, 300);
    const std::vector<Event> expected = {{1, 0, 0, 1}, {2, 439, 299, -1}, {5, 120, 299, 1}};
    EXPECT_EQ(c.events, expected);
}

TEST(Mirror, ArithmeticAndInvolution) {
    LabeledSample s = toy_sample();
    s.stream.events = {{7, 10, 4, 1}};
    const LabeledSample m = mirror_sample(s);
    ASSERT_EQ(m.stream.events.size(), 1U);
    EXPECT_EQ(m.stream.events[0].x, 429);
    EXPECT_EQ(m.stream.events[0].y, 4);
    EXPECT_EQ(m.stream.events[0].t_ns, 7);
    EXPECT_EQ(m.eye, Eye::Right);
    EXPECT_THROW(mirror_sample(m), DomainError);

    const LabeledSample big = toy_sample(440, 300, 500);
    const LabeledSample once = mirror_sample(big);
    EXPECT_EQ(once.stream.events.size(), big.stream.events.size());
    EXPECT_TRUE(once.stream.is_canonical());
    LabeledSample back_in = once;
    back_in.eye = Eye::Left;
    EXPECT_EQ(mirror_sample(back_in).stream, big.stream);
}

TEST(Calibration, IntervalsMatchDirectQuantiles) {
    CountCalibration cal;
    Rng rng(17);
    for (int c = 0; c < kNumClasses; ++c) {
        std::normal_distribution<double> spread(800.0 + 400.0 * c, 60.0 + 20.0 * c);
        for (int i = 0; i < 100; ++i) {
            cal.add(c, static_cast<std::uint64_t>(std::max(1.0, std::round(spread(rng)))));
        }
    }
    cal.finalize();
    // Type-7 quantile written out independently.
    auto q = [](std::vector<std::uint64_t> v, double p) {
        std::sort(v.begin(), v.end());
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto i = static_cast<std::size_t>(pos);
        const double next = i + 1 < v.size() ? static_cast<double>(v[i + 1]) : static_cast<double>(v[i]);
        return static_cast<double>(v[i]) + (pos - static_cast<double>(i)) * (next - static_cast<double>(v[i]));
    };
    std::array<CountInterval, kNumClasses> iv{};
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<std::uint64_t> below = cal.counts[c];
        std::vector<std::uint64_t> above = cal.counts[c];
        if (c > 0) below.insert(below.end(), cal.counts[c - 1].begin(), cal.counts[c - 1].end());
        if (c + 1 < kNumClasses) above.insert(above.end(), cal.counts[c + 1].begin(), cal.counts[c + 1].end());
        iv[c] = count_interval(c, cal);
        EXPECT_EQ(iv[c].lo, static_cast<std::uint64_t>(std::floor(q(below, 0.25)))) << c;
        EXPECT_EQ(iv[c].hi, static_cast<std::uint64_t>(std::ceil(q(above, 0.75)))) << c;
    }
    for (int c = 0; c + 1 < kNumClasses; ++c) {
        EXPECT_LE(std::max(iv[c].lo, iv[c + 1].lo), std::min(iv[c].hi, iv[c + 1].hi)) << c;
    }
    for (int i = 0; i < 200; ++i) {
        const int c = i % kNumClasses;
        const std::uint64_t t = target_count_for(c, cal, rng);
        EXPECT_GE(t, iv[c].lo);
        EXPECT_LE(t, iv[c].hi);
    }
}

TEST(Calibration, DegenerateAndEmpty) {
    CountCalibration cal;
    for (int c = 0; c < kNumClasses; ++c) {
        for (int i = 0; i < 5; ++i) cal.add(c, 321);
    }
    cal.finalize();
    Rng rng(1);
    for (int c = 0; c < kNumClasses; ++c) {
        EXPECT_EQ(target_count_for(c, cal, rng), 321U);
    }
    CountCalibration empty;
    EXPECT_THROW(target_count_for(3, empty, rng), DomainError);
    EXPECT_THROW(count_interval(7, cal), DomainError);
}

TEST(Resample, IdentityAtOrAboveRawCount) {
    const LabeledSample s = toy_sample();
    Rng rng(2);
    EXPECT_EQ(resample_counts(s, s.stream.events.size(), rng).stream, s.stream);
    const LabeledSample more = resample_counts(s, 10 * s.stream.events.size(), rng);
    EXPECT_EQ(more.stream, s.stream);
    EXPECT_EQ(more.resampled_event_count, s.raw_event_count);
    EXPECT_THROW(resample_counts(s, 0, rng), DomainError);
}

TEST(Resample, SubsetSortedAndUnmodified) {
    const LabeledSample s = toy_sample(440, 300, 400);
    Rng rng(6);
    const LabeledSample r = resample_counts(s, 123, rng);
    EXPECT_EQ(r.stream.events.size(), 123U);
    EXPECT_EQ(r.resampled_event_count, 123U);
    EXPECT_EQ(r.raw_event_count, 400U);
    EXPECT_TRUE(r.stream.is_canonical());
    std::multiset<std::tuple<std::int64_t, int, int, int>> pool;
    for (const Event& e : s.stream.events) pool.insert({e.t_ns, e.x, e.y, e.polarity});
    for (const Event& e : r.stream.events) {
        auto it = pool.find({e.t_ns, e.x, e.y, e.polarity});
        ASSERT_NE(it, pool.end());
        pool.erase(it);
    }
}

TEST(Resample, SingleSurvivorIsUniform) {
    const std::size_t n = 20;
    LabeledSample s = toy_sample(64, 64, 0);
    for (std::size_t i = 0; i < n; ++i) {
        s.stream.events.push_back({static_cast<std::int64_t>(i), static_cast<std::uint16_t>(i), 0, 1});
    }
    s.raw_event_count = n;
    const int trials = 10'000;
    std::vector<int> hits(n, 0);
    Rng rng(99);
    for (int t = 0; t < trials; ++t) {
        const LabeledSample r = resample_counts(s, 1, rng);
        ASSERT_EQ(r.stream.events.size(), 1U);
        ++hits[r.stream.events[0].x];
    }
    const double p = 1.0 / n;
    const double sigma = std::sqrt(p * (1 - p) / trials);
    double chi2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = static_cast<double>(hits[i]) / trials;
        EXPECT_NEAR(f, p, 3 * sigma) << i;
        chi2 += (hits[i] - trials * p) * (hits[i] - trials * p) / (trials * p);
    }
    EXPECT_LT(chi2, 43.8);  // 99.9% point of chi-square with 19 dof
}

TEST(Evms, RoundTripBitExact) {
    testing::TempDir dir("evms");
    LabeledSample s = toy_sample(110, 75, 300);
    s.eye = Eye::Right;
    const std::vector<std::uint8_t> bytes = encode_evms(s);
    EXPECT_EQ(bytes.size(), kEvmsHeaderBytes + 300 * kEvmsRecordBytes);
    write_stream(s, dir / "a.evms");
    const LabeledSample back = read_stream(dir / "a.evms");
    EXPECT_EQ(back.stream, s.stream);
    EXPECT_EQ(back.class_id, s.class_id);
    EXPECT_EQ(back.eye, Eye::Right);
    EXPECT_EQ(back.duration_ns, s.duration_ns);
    EXPECT_DOUBLE_EQ(back.peak_amplitude_deg, 1.512);
    EXPECT_EQ(encode_evms(back), bytes);
}

TEST(Evms, HeaderLayout) {
    LabeledSample s = toy_sample(110, 75, 1);
    s.stream.events = {{0x01020304, 0x0A0B, 0x0C, 1}};
    s.stream.width = 0x0E10;
    const std::vector<std::uint8_t> b = encode_evms(s);
    ASSERT_EQ(b.size(), 44U);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "EVMS");
    EXPECT_EQ(b[4], 1);
    EXPECT_EQ(b[5], 0);
    EXPECT_EQ(b[6], 0x10);
    EXPECT_EQ(b[7], 0x0E);
    EXPECT_EQ(b[10], 4);    // class
    EXPECT_EQ(b[11], 0);    // left eye
    EXPECT_EQ(b[14] | (b[15] << 8), 1512);  // millidegrees
    EXPECT_EQ(b[34], 0x04);
    EXPECT_EQ(b[37], 0x01);
    EXPECT_EQ(b[38], 0x0B);
    EXPECT_EQ(b[39], 0x0A);
    EXPECT_EQ(b[40], 0x0C);
    EXPECT_EQ(b[42], 1);
    EXPECT_EQ(b[43], 0);
}

TEST(Evms, CorruptionRejectedWithOffset) {
    const LabeledSample s = toy_sample(110, 75, 10);
    std::vector<std::uint8_t> b = encode_evms(s);

    std::vector<std::uint8_t> magic = b;
    magic[0] = 'X';
    EXPECT_THROW(decode_evms(magic), FormatError);

    std::vector<std::uint8_t> wide = b;
    const std::size_t rec = kEvmsHeaderBytes + 3 * kEvmsRecordBytes;
    wide[rec + 4] = 110;  // x == width
    wide[rec + 5] = 0;
    try {
        decode_evms(wide);
        FAIL() << "accepted x >= width";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), rec + 4);
    }

    std::vector<std::uint8_t> cut(b.begin(), b.end() - 3);
    EXPECT_THROW(decode_evms(cut), FormatError);
    std::vector<std::uint8_t> header_only(b.begin(), b.begin() + 20);
    EXPECT_THROW(decode_evms(header_only), FormatError);
    std::vector<std::uint8_t> version = b;
    version[4] = 2;
    EXPECT_THROW(decode_evms(version), FormatError);
}

// In-memory manifest with `cell` samples per (class, eye) in groups of `group`.
DatasetManifest synthetic_manifest(int cell, int group, bool both_eyes = true) {
    DatasetManifest m;
    m.sensor_width = 800;
    m.sensor_height = 600;
    m.roi = center_roi(800, 600);
    m.global_seed = 5;
    m.samples.reserve(static_cast<std::size_t>(cell) * kNumClasses * 2);
    for (int e = 0; e < (both_eyes ? 2 : 1); ++e) {
        for (int c = 0; c < kNumClasses; ++c) {
            for (int i = 0; i < cell; ++i) {
                SampleRecord r;
                r.class_id = c;
                r.eye = static_cast<Eye>(e);
                r.seed = derive_seed(7, c, i, e);
                r.source_seed = derive_seed(11, c, i / group);
                r.path = std::string(to_string(r.eye)) + "/" + std::to_string(c) + "/" + seed_hex(r.seed) + ".evms";
                r.raw_event_count = 100 + i;
                r.resampled_event_count = 100 + i;
                m.samples.push_back(std::move(r));
            }
        }
    }
    return m;
}

std::map<std::tuple<int, int, int>, int> cell_counts(const DatasetManifest& m) {
    std::map<std::tuple<int, int, int>, int> out;
    for (const auto& r : m.samples) {
        ++out[{static_cast<int>(r.split), static_cast<int>(r.eye), r.class_id}];
    }
    return out;
}

TEST(Split, FullScaleProportions) {
    // 87,500 sequences per eye: 12,500 per class and eye, resample groups of 5.
    const DatasetManifest m = synthetic_manifest(12'500, 5);
    ASSERT_EQ(m.samples.size(), 175'000U);
    const DatasetManifest s = split_dataset(m, 0.2, 2'100, 1);
    const auto counts = cell_counts(s);
    for (int e = 0; e < 2; ++e) {
        int val_eye = 0;
        for (int c = 0; c < kNumClasses; ++c) {
            EXPECT_EQ((counts.at({static_cast<int>(Split::Test), e, c})), 150);
            EXPECT_EQ((counts.at({static_cast<int>(Split::Val), e, c})), 2'500);
            EXPECT_EQ((counts.at({static_cast<int>(Split::Train), e, c})), 9'850);
            val_eye += counts.at({static_cast<int>(Split::Val), e, c});
        }
        EXPECT_EQ(val_eye, 17'500);
    }
}

TEST(Split, DeskProportionsAndGrouping) {
    const DatasetManifest m = synthetic_manifest(100, 5);
    const DatasetManifest s = split_dataset(m, 0.2, 280, 3);
    EXPECT_EQ(s.select(Split::Val, Eye::Left).size(), 140U);
    EXPECT_EQ(s.select(Split::Test, Eye::Right).size(), 140U);
    EXPECT_EQ(s.select(Split::Train).size(), 840U);
    std::map<std::pair<int, std::uint64_t>, std::set<Split>> groups;
    for (const auto& r : s.samples) {
        groups[{static_cast<int>(r.eye), r.source_seed}].insert(r.split);
    }
    for (const auto& [g, splits] : groups) {
        EXPECT_EQ(splits.size(), 1U);
    }
    EXPECT_EQ(s.content_digest(), m.content_digest());
    const DatasetManifest again = split_dataset(m, 0.2, 280, 3);
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        ASSERT_EQ(again.samples[i].split, s.samples[i].split);
    }
}

TEST(Split, Errors) {
    const DatasetManifest m = synthetic_manifest(100, 5);
    EXPECT_THROW(split_dataset(m, 0.2, 281, 1), DomainError);   // not divisible by 14
    EXPECT_THROW(split_dataset(m, 0.2, 14 * 3, 1), DomainError); // 3 per cell splits a group
    EXPECT_THROW(split_dataset(m, 1.0, 280, 1), DomainError);
    EXPECT_THROW(split_dataset(m, 0.9, 280, 1), DomainError);    // val + test > cell
    const DatasetManifest left = synthetic_manifest(20, 1, false);
    EXPECT_NO_THROW(split_dataset(left, 0.25, 35, 1));
    EXPECT_THROW(split_dataset(left, 0.25, 36, 1), DomainError);
}

TEST(Manifest, JsonRoundTripAndDigest) {
    DatasetManifest m = split_dataset(synthetic_manifest(10, 1), 0.2, 28, 2);
    m.samples[3].digest = std::string(64, 'a');
    const DatasetManifest back = manifest_from_json(to_json(m));
    EXPECT_EQ(back.samples.size(), m.samples.size());
    EXPECT_EQ(back.roi, m.roi);
    EXPECT_EQ(back.samples[3].digest, m.samples[3].digest);
    EXPECT_EQ(back.samples[5].split, m.samples[5].split);
    EXPECT_EQ(back.content_digest(), m.content_digest());
    DatasetManifest changed = m;
    changed.samples[0].raw_event_count += 1;
    EXPECT_NE(changed.content_digest(), m.content_digest());
}

TEST(Digest, KnownVectors) {
    EXPECT_EQ(sha256_hex(std::string_view("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex(std::string_view("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

DatasetConfig small_config() {
    DatasetConfig c = DatasetConfig::desk();
    c.scene.scene.width = 80;
    c.scene.scene.height = 60;
    c.scene.scene.supersampling = 2;
    c.base_instances = 1;
    c.durations_per_instance = 2;
    c.resamples_per_sequence = 2;
    c.seed = 31;
    return c;
}

TEST(Build, SampleDeterministicAndRightEyeMirrors) {
    const DatasetConfig c = small_config();
    const LabeledSample a = build_sample(3, Eye::Left, c.scene, c.sim, 1234);
    const LabeledSample b = build_sample(3, Eye::Left, c.scene, c.sim, 1234);
    EXPECT_EQ(encode_evms(a), encode_evms(b));
    EXPECT_GT(a.stream.events.size(), 0U);
    EXPECT_EQ(a.stream.width, 44);
    EXPECT_EQ(a.stream.height, 30);
    EXPECT_NO_THROW(a.stream.validate());
    const LabeledSample r = build_sample(3, Eye::Right, c.scene, c.sim, 1234);
    EXPECT_EQ(r.stream, mirror_sample(a).stream);
    EXPECT_EQ(r.eye, Eye::Right);
}

TEST(Build, WorkerCountDoesNotChangeDigest) {
    testing::TempDir d1("build1");
    testing::TempDir d2("build2");
    DatasetConfig c = small_config();
    c.workers = 1;
    const DatasetManifest m1 = build_dataset(c, d1.path());
    c.workers = 3;
    const DatasetManifest m2 = build_dataset(c, d2.path());
    EXPECT_EQ(m1.samples.size(), 2U * kNumClasses * 1 * 2 * 2);
    EXPECT_EQ(m1.content_digest(), m2.content_digest());
    EXPECT_TRUE(std::filesystem::exists(d1 / kManifestFileName));
    for (const auto& r : m1.samples) {
        EXPECT_EQ(sha256_file(d1.path() / r.path), r.digest);
        EXPECT_LE(r.resampled_event_count, r.raw_event_count);
    }
    // Rebuild over the existing tree resumes to the same result.
    c.workers = 1;
    EXPECT_EQ(build_dataset(c, d1.path()).content_digest(), m1.content_digest());
    EXPECT_EQ(read_manifest(d1 / kManifestFileName).content_digest(), m1.content_digest());
}

TEST(Build, ConfigJson) {
    const nlohmann::json j = nlohmann::json::parse(R"({"preset": "full", "dataset": {"base_instances": 2}, "simulator": {"theta_on": 0.3}})");
    const DatasetConfig c = dataset_config_from_json(j);
    EXPECT_EQ(c.scene.scene.width, 800);
    EXPECT_DOUBLE_EQ(c.sim.theta_on, 0.3);
    EXPECT_EQ(c.base_instances, 2);
    EXPECT_THROW(dataset_config_from_json(nlohmann::json::parse(R"({"preset": "huge"})")), DomainError);
    EXPECT_EQ(DatasetConfig::full().base_instances, 500);
    const DatasetConfig desk = DatasetConfig::desk();
    EXPECT_EQ(desk.base_instances * desk.durations_per_instance * desk.resamples_per_sequence * kNumClasses, 700);
}

}  // namespace
}  // namespace msx
