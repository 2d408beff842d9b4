#pragma once

#include <cstdint>
#include <vector>

#include "msx/eye_scene.hpp"
#include "msx/random.hpp"

namespace msx {

struct Event {
    std::int64_t t_ns = 0;
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int8_t polarity = 1;  // +1 brighter, -1 darker

    bool operator==(const Event&) const = default;
};

// Canonical total order: (t, y, x, polarity).
inline bool event_less(const Event& a, const Event& b) noexcept {
    if (a.t_ns != b.t_ns) return a.t_ns < b.t_ns;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.polarity < b.polarity;
}

struct EventStream {
    int width = 0;
    int height = 0;
    std::vector<Event> events;

    bool operator==(const EventStream&) const = default;

    void canonicalize();
    bool is_canonical() const;
    // Throws DomainError on out-of-bounds coordinates or a polarity other than +/-1.
    void validate() const;
};

struct SimulatorConfig {
    double theta_on = 0.2;               // log-intensity step for ON events
    double theta_off = 0.2;              // log-intensity step for OFF events
    double threshold_mismatch_sigma = 0.03;  // relative per-pixel spread
    std::int64_t refractory_period_ns = 1000;
    double noise_rate_hz = 0.0;          // per pixel
    double log_eps = 1.0e-3;

    void validate() const;
};

// Events from a frame sequence, v2e style: per-pixel log-intensity memory, linear
// interpolation between frames, one event per threshold crossing, refractory
// suppression and optional Poisson background noise.
EventStream simulate_events(const FrameSequence& frames, const SimulatorConfig& config, Rng& rng);

// Straight per-pixel scalar implementation of the same model. Given the same seed it
// produces exactly the same stream as simulate_events.
EventStream brute_force_reference(const FrameSequence& frames, const SimulatorConfig& config,
                                  std::uint64_t rng_seed);

}  // namespace msx
