#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "msx/dvs_sim.hpp"
#include "msx/errors.hpp"

namespace msx {
namespace {

SimulatorConfig clean_config(double theta = 0.2) {
    SimulatorConfig c;
    c.theta_on = theta;
    c.theta_off = theta;
    c.threshold_mismatch_sigma = 0.0;
    c.refractory_period_ns = 0;
    c.noise_rate_hz = 0.0;
    return c;
}

FrameSequence random_sequence(int w, int h, int n, Rng& rng, bool return_to_start = false) {
    std::uniform_real_distribution<float> level(0.0F, 1.0F);
    std::uniform_int_distribution<std::int64_t> gap(1, 400'000);
    FrameSequence seq;
    std::int64_t t = 0;
    for (int k = 0; k < n; ++k) {
        IntensityGrid g(w, h);
        for (float& v : g.pixels) {
            v = level(rng);
        }
        seq.frames.push_back(std::move(g));
        seq.timestamps_ns.push_back(t);
        t += gap(rng);
    }
    if (return_to_start) {
        seq.frames.back() = seq.frames.front();
    }
    return seq;
}

TEST(Simulator, TwoThresholdStepGivesTwoEventsAtCrossings) {
    const SimulatorConfig cfg = clean_config(0.2);
    const float i0 = 0.3F;
    // Smallest float whose log level is at least two thresholds above i0's.
    float i1 = static_cast<float>((i0 + cfg.log_eps) * std::exp(0.4) - cfg.log_eps);
    while (std::log(static_cast<double>(i1) + cfg.log_eps) - std::log(static_cast<double>(i0) + cfg.log_eps) < 0.4) {
        i1 = std::nextafter(i1, 1.0F);
    }
    FrameSequence seq;
    seq.frames = {IntensityGrid(4, 3, 0.5F), IntensityGrid(4, 3, 0.5F)};
    seq.frames[0].at(2, 1) = i0;
    seq.frames[1].at(2, 1) = i1;
    seq.timestamps_ns = {0, 1'000'000};

    const double l0 = std::log(static_cast<double>(i0) + cfg.log_eps);
    const double l1 = std::log(static_cast<double>(i1) + cfg.log_eps);
    const auto expected_t = [&](int k) { return std::llround(k * 0.2 / (l1 - l0) * 1.0e6); };

    Rng rng(1);
    const EventStream s = simulate_events(seq, cfg, rng);
    ASSERT_EQ(s.events.size(), 2U);
    for (int k = 0; k < 2; ++k) {
        EXPECT_EQ(s.events[k].x, 2);
        EXPECT_EQ(s.events[k].y, 1);
        EXPECT_EQ(s.events[k].polarity, 1);
        EXPECT_EQ(s.events[k].t_ns, expected_t(k + 1));
    }
    EXPECT_EQ(s.events[0].t_ns, 500'000);
    EXPECT_EQ(s.events[1].t_ns, 1'000'000);
    EXPECT_EQ(brute_force_reference(seq, cfg, 1), s);
}

TEST(Simulator, IdenticalFramesNoEvents) {
    FrameSequence seq;
    seq.frames.assign(4, IntensityGrid(8, 8, 0.42F));
    seq.timestamps_ns = {0, 10, 20, 30};
    SimulatorConfig cfg;  // defaults include mismatch
    Rng rng(9);
    EXPECT_TRUE(simulate_events(seq, cfg, rng).events.empty());
    EXPECT_TRUE(brute_force_reference(seq, cfg, 9).events.empty());
}

// Test-side count of threshold crossings per pixel with no mismatch and no refractory
// period: the reference level only moves in whole thresholds.
std::map<std::pair<int, int>, std::pair<int, int>> crossing_oracle(const FrameSequence& seq, double theta,
                                                                   double eps) {
    std::map<std::pair<int, int>, std::pair<int, int>> out;
    const IntensityGrid& first = seq.frames.front();
    for (int y = 0; y < first.height; ++y) {
        for (int x = 0; x < first.width; ++x) {
            double ref = std::log(first.at(x, y) + eps);
            int on = 0;
            int off = 0;
            for (std::size_t k = 1; k < seq.frames.size(); ++k) {
                const double level = std::log(seq.frames[k].at(x, y) + eps);
                while (level - ref >= theta - 1e-9) {
                    ref += theta;
                    ++on;
                }
                while (ref - level >= theta - 1e-9) {
                    ref -= theta;
                    ++off;
                }
            }
            if (on + off > 0) {
                out[{x, y}] = {on, off};
            }
        }
    }
    return out;
}

TEST(Simulator, ClosedSequenceBalancesPolarityPerPixel) {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const FrameSequence seq = random_sequence(12, 9, 6, rng, true);
        const SimulatorConfig cfg = clean_config(0.15);
        Rng sim_rng(trial);
        const EventStream s = simulate_events(seq, cfg, sim_rng);
        std::map<std::pair<int, int>, std::pair<int, int>> got;
        for (const Event& e : s.events) {
            auto& c = got[{e.x, e.y}];
            (e.polarity > 0 ? c.first : c.second) += 1;
        }
        EXPECT_EQ(got, crossing_oracle(seq, 0.15, cfg.log_eps));
        for (const auto& [pixel, counts] : got) {
            EXPECT_EQ(counts.first, counts.second);
        }
    }
}

TEST(Simulator, MatchesReferenceOnRandomInputs) {
    Rng rng(2024);
    std::uniform_real_distribution<double> theta(0.05, 0.5);
    std::uniform_real_distribution<double> sigma(0.0, 0.1);
    std::uniform_int_distribution<std::int64_t> refractory(0, 200'000);
    for (int trial = 0; trial < 20; ++trial) {
        const FrameSequence seq = random_sequence(16, 16, 5, rng);
        SimulatorConfig cfg;
        cfg.theta_on = theta(rng);
        cfg.theta_off = theta(rng);
        cfg.threshold_mismatch_sigma = trial % 2 ? sigma(rng) : 0.0;
        cfg.refractory_period_ns = refractory(rng);
        cfg.noise_rate_hz = trial % 3 == 0 ? 500.0 : 0.0;
        const std::uint64_t seed = 1000 + trial;
        Rng sim_rng(seed);
        EXPECT_EQ(simulate_events(seq, cfg, sim_rng), brute_force_reference(seq, cfg, seed)) << trial;
    }
}

TEST(Simulator, OutputCanonicalAndInBounds) {
    Rng rng(5);
    SimulatorConfig cfg;
    cfg.noise_rate_hz = 2000.0;
    for (int trial = 0; trial < 5; ++trial) {
        const FrameSequence seq = random_sequence(10, 7, 4, rng);
        Rng sim_rng(trial);
        const EventStream s = simulate_events(seq, cfg, sim_rng);
        EXPECT_TRUE(s.is_canonical());
        EXPECT_NO_THROW(s.validate());
        for (std::size_t i = 1; i < s.events.size(); ++i) {
            EXPECT_LE(s.events[i - 1].t_ns, s.events[i].t_ns);
        }
    }
}

TEST(Simulator, DoublingThresholdsNeverAddsEvents) {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const FrameSequence seq = random_sequence(16, 16, 5, rng);
        const SimulatorConfig a = clean_config(0.1 + 0.02 * trial);
        SimulatorConfig b = a;
        b.theta_on *= 2.0;
        b.theta_off *= 2.0;
        Rng ra(1);
        Rng rb(1);
        std::map<std::pair<int, int>, int> ca;
        std::map<std::pair<int, int>, int> cb;
        for (const Event& e : simulate_events(seq, a, ra).events) {
            ++ca[{e.x, e.y}];
        }
        for (const Event& e : simulate_events(seq, b, rb).events) {
            ++cb[{e.x, e.y}];
        }
        for (const auto& [pixel, n] : cb) {
            EXPECT_LE(n, ca[pixel]);
        }
    }
}

TEST(Simulator, LongRefractoryAllowsOneEventPerPixel) {
    Rng rng(13);
    const FrameSequence seq = random_sequence(16, 16, 5, rng);
    SimulatorConfig cfg = clean_config(0.05);
    cfg.refractory_period_ns = seq.timestamps_ns.back() + 1;
    Rng sim_rng(3);
    const EventStream s = simulate_events(seq, cfg, sim_rng);
    ASSERT_FALSE(s.events.empty());
    std::map<std::pair<int, int>, int> count;
    for (const Event& e : s.events) {
        EXPECT_EQ((++count[{e.x, e.y}]), 1);
    }
}

TEST(Simulator, NoiseIsRoughlyBalanced) {
    FrameSequence seq;
    seq.frames.assign(2, IntensityGrid(32, 32, 0.5F));
    seq.timestamps_ns = {0, 1'000'000'000};
    SimulatorConfig cfg = clean_config();
    cfg.noise_rate_hz = 5.0;  // ~5120 expected events
    Rng rng(4);
    const EventStream s = simulate_events(seq, cfg, rng);
    int pos = 0;
    for (const Event& e : s.events) {
        pos += e.polarity > 0;
    }
    const double n = static_cast<double>(s.events.size());
    EXPECT_NEAR(n, 5120.0, 5 * std::sqrt(5120.0));
    EXPECT_NEAR(pos, n / 2, 5 * std::sqrt(n) / 2);
}

TEST(Simulator, ErrorsOnBadInput) {
    Rng rng(1);
    FrameSequence one;
    one.frames = {IntensityGrid(4, 4)};
    one.timestamps_ns = {0};
    EXPECT_THROW(simulate_events(one, SimulatorConfig{}, rng), DomainError);
    EXPECT_THROW(brute_force_reference(one, SimulatorConfig{}, 1), DomainError);

    FrameSequence backwards;
    backwards.frames = {IntensityGrid(4, 4), IntensityGrid(4, 4)};
    backwards.timestamps_ns = {10, 5};
    EXPECT_THROW(simulate_events(backwards, SimulatorConfig{}, rng), DomainError);

    SimulatorConfig bad;
    bad.theta_on = 0.0;
    EXPECT_THROW(bad.validate(), DomainError);
    bad = SimulatorConfig{};
    bad.refractory_period_ns = -1;
    EXPECT_THROW(bad.validate(), DomainError);
    bad = SimulatorConfig{};
    bad.noise_rate_hz = -1.0;
    EXPECT_THROW(bad.validate(), DomainError);
}

TEST(EventStream, CanonicalOrderAndValidation) {
    EventStream s;
    s.width = 4;
    s.height = 4;
    s.events = {{5, 1, 2, 1}, {5, 0, 2, -1}, {5, 0, 2, 1}, {1, 3, 3, 1}, {5, 0, 1, 1}};
    EXPECT_FALSE(s.is_canonical());
    s.canonicalize();
    EXPECT_TRUE(s.is_canonical());
    const std::vector<Event> expected = {{1, 3, 3, 1}, {5, 0, 1, 1}, {5, 0, 2, -1}, {5, 0, 2, 1}, {5, 1, 2, 1}};
    EXPECT_EQ(s.events, expected);
    EXPECT_NO_THROW(s.validate());
    s.events.push_back({6, 4, 0, 1});
    EXPECT_THROW(s.validate(), DomainError);
    s.events.back() = {6, 0, 0, 0};
    EXPECT_THROW(s.validate(), DomainError);
}

}  // namespace
}  // namespace msx
