#include "msx/dvs_sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msx/errors.hpp"

namespace msx {

namespace {

// Slack on the crossing comparison so a change of exactly k thresholds yields k
// events despite rounding in the accumulated reference level.
constexpr double kCrossingTolerance = 1.0e-9;
constexpr double kMinMismatchFactor = 0.05;

void check_frames(const FrameSequence& frames) {
    if (frames.frames.size() < 2) {
        throw DomainError("simulate_events: need at least two frames");
    }
    if (frames.timestamps_ns.size() != frames.frames.size()) {
        throw DomainError("simulate_events: one timestamp per frame required");
    }
    const int w = frames.frames.front().width;
    const int h = frames.frames.front().height;
    if (w <= 0 || h <= 0 || w > 65535 || h > 65535) {
        throw DomainError("simulate_events: bad frame size");
    }
    if (frames.timestamps_ns.front() < 0) {
        throw DomainError("simulate_events: negative timestamp");
    }
    for (std::size_t k = 0; k < frames.frames.size(); ++k) {
        const IntensityGrid& f = frames.frames[k];
        if (f.width != w || f.height != h || f.pixels.size() != static_cast<std::size_t>(w) * h) {
            throw DomainError("simulate_events: frame size mismatch");
        }
        if (k > 0 && frames.timestamps_ns[k] <= frames.timestamps_ns[k - 1]) {
            throw DomainError("simulate_events: timestamps must be strictly increasing");
        }
        for (float v : f.pixels) {
            if (!(v >= 0.0F && v <= 1.0F)) {
                throw DomainError("simulate_events: intensity outside [0, 1]");
            }
        }
    }
}

struct PixelThresholds {
    std::vector<double> on;
    std::vector<double> off;
};

// Draw order: for each pixel in row-major order an ON then an OFF factor, only when
// mismatch is enabled.
PixelThresholds draw_thresholds(int w, int h, const SimulatorConfig& cfg, Rng& rng) {
    const std::size_t n = static_cast<std::size_t>(w) * h;
    PixelThresholds th{std::vector<double>(n, cfg.theta_on), std::vector<double>(n, cfg.theta_off)};
    if (cfg.threshold_mismatch_sigma > 0.0) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t p = 0; p < n; ++p) {
            th.on[p] = cfg.theta_on * std::max(kMinMismatchFactor, 1.0 + cfg.threshold_mismatch_sigma * gauss(rng));
            th.off[p] = cfg.theta_off * std::max(kMinMismatchFactor, 1.0 + cfg.threshold_mismatch_sigma * gauss(rng));
        }
    }
    return th;
}

// Homogeneous Poisson process over the whole array; drawn after the thresholds.
void append_noise(std::vector<Event>& out, int w, int h, std::int64_t t_begin, std::int64_t t_end,
                  const SimulatorConfig& cfg, Rng& rng) {
    if (cfg.noise_rate_hz <= 0.0) {
        return;
    }
    const double rate_per_ns = cfg.noise_rate_hz * w * h * 1.0e-9;
    std::exponential_distribution<double> gap(rate_per_ns);
    std::uniform_int_distribution<int> xs(0, w - 1);
    std::uniform_int_distribution<int> ys(0, h - 1);
    std::bernoulli_distribution positive(0.5);
    double t = static_cast<double>(t_begin);
    while (true) {
        t += gap(rng);
        if (t > static_cast<double>(t_end)) {
            break;
        }
        Event e;
        e.t_ns = static_cast<std::int64_t>(t);
        e.x = static_cast<std::uint16_t>(xs(rng));
        e.y = static_cast<std::uint16_t>(ys(rng));
        e.polarity = positive(rng) ? 1 : -1;
        out.push_back(e);
    }
}

}  // namespace

void EventStream::canonicalize() {
    std::sort(events.begin(), events.end(), event_less);
}

bool EventStream::is_canonical() const {
    return std::is_sorted(events.begin(), events.end(), event_less);
}

void EventStream::validate() const {
    for (const Event& e : events) {
        if (e.x >= width || e.y >= height) {
            throw DomainError("event outside sensor bounds");
        }
        if (e.polarity != 1 && e.polarity != -1) {
            throw DomainError("event polarity must be +1 or -1");
        }
        if (e.t_ns < 0) {
            throw DomainError("negative event timestamp");
        }
    }
}

void SimulatorConfig::validate() const {
    if (!(theta_on > 0.0 && theta_off > 0.0)) {
        throw DomainError("simulator: thresholds must be positive");
    }
    if (!(threshold_mismatch_sigma >= 0.0)) {
        throw DomainError("simulator: mismatch sigma must be >= 0");
    }
    if (refractory_period_ns < 0) {
        throw DomainError("simulator: refractory period must be >= 0");
    }
    if (!(noise_rate_hz >= 0.0)) {
        throw DomainError("simulator: noise rate must be >= 0");
    }
    if (!(log_eps > 0.0)) {
        throw DomainError("simulator: log_eps must be positive");
    }
}

EventStream simulate_events(const FrameSequence& frames, const SimulatorConfig& config, Rng& rng) {
    config.validate();
    check_frames(frames);

    const int w = frames.frames.front().width;
    const int h = frames.frames.front().height;
    const std::size_t npix = static_cast<std::size_t>(w) * h;
    const std::size_t nframes = frames.frames.size();
    const PixelThresholds th = draw_thresholds(w, h, config, rng);

    // Log frames, plus a mask of pixels that never change (they cannot fire).
    std::vector<std::vector<double>> logs(nframes, std::vector<double>(npix));
    for (std::size_t k = 0; k < nframes; ++k) {
        const auto& src = frames.frames[k].pixels;
        auto& dst = logs[k];
        for (std::size_t p = 0; p < npix; ++p) {
            dst[p] = std::log(static_cast<double>(src[p]) + config.log_eps);
        }
    }
    std::vector<std::size_t> active;
    active.reserve(npix / 4);
    for (std::size_t p = 0; p < npix; ++p) {
        const float first = frames.frames.front().pixels[p];
        for (std::size_t k = 1; k < nframes; ++k) {
            if (frames.frames[k].pixels[p] != first) {
                active.push_back(p);
                break;
            }
        }
    }

    EventStream out;
    out.width = w;
    out.height = h;
    const std::int64_t refractory = config.refractory_period_ns;

    for (std::size_t p : active) {
        const auto x = static_cast<std::uint16_t>(p % w);
        const auto y = static_cast<std::uint16_t>(p / w);
        const double on = th.on[p];
        const double off = th.off[p];
        double ref = logs[0][p];
        bool fired = false;
        std::int64_t last = 0;

        auto emit = [&](std::int64_t t, std::int8_t pol) {
            if (!fired || t - last >= refractory) {
                out.events.push_back(Event{t, x, y, pol});
                fired = true;
                last = t;
            }
        };

        for (std::size_t k = 0; k + 1 < nframes; ++k) {
            const double l0 = logs[k][p];
            const double l1 = logs[k + 1][p];
            const std::int64_t t0 = frames.timestamps_ns[k];
            const auto span = static_cast<double>(frames.timestamps_ns[k + 1] - t0);
            const double slope = l1 - l0;
            while (l1 - ref >= on - kCrossingTolerance) {
                const double target = ref + on;
                const double frac = slope != 0.0 ? std::clamp((target - l0) / slope, 0.0, 1.0) : 0.0;
                emit(t0 + std::llround(frac * span), 1);
                ref = target;
            }
            while (ref - l1 >= off - kCrossingTolerance) {
                const double target = ref - off;
                const double frac = slope != 0.0 ? std::clamp((target - l0) / slope, 0.0, 1.0) : 0.0;
                emit(t0 + std::llround(frac * span), -1);
                ref = target;
            }
        }
    }

    append_noise(out.events, w, h, frames.timestamps_ns.front(), frames.timestamps_ns.back(), config, rng);
    out.canonicalize();
    return out;
}

EventStream brute_force_reference(const FrameSequence& frames, const SimulatorConfig& config,
                                  std::uint64_t rng_seed) {
    config.validate();
    check_frames(frames);
    Rng rng(rng_seed);

    const int w = frames.frames.front().width;
    const int h = frames.frames.front().height;
    const PixelThresholds th = draw_thresholds(w, h, config, rng);

    EventStream out;
    out.width = w;
    out.height = h;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            double ref = std::log(static_cast<double>(frames.frames[0].at(x, y)) + config.log_eps);
            bool fired = false;
            std::int64_t last = 0;
            for (std::size_t k = 0; k + 1 < frames.frames.size(); ++k) {
                const double l0 = std::log(static_cast<double>(frames.frames[k].at(x, y)) + config.log_eps);
                const double l1 = std::log(static_cast<double>(frames.frames[k + 1].at(x, y)) + config.log_eps);
                const std::int64_t t0 = frames.timestamps_ns[k];
                const auto span = static_cast<double>(frames.timestamps_ns[k + 1] - t0);
                const double slope = l1 - l0;
                for (;;) {
                    std::int8_t pol = 0;
                    double target = 0.0;
                    if (l1 - ref >= th.on[p] - kCrossingTolerance) {
                        pol = 1;
                        target = ref + th.on[p];
                    } else if (ref - l1 >= th.off[p] - kCrossingTolerance) {
                        pol = -1;
                        target = ref - th.off[p];
                    } else {
                        break;
                    }
                    double frac = 0.0;
                    if (slope != 0.0) {
                        frac = std::clamp((target - l0) / slope, 0.0, 1.0);
                    }
                    const std::int64_t t = t0 + std::llround(frac * span);
                    if (!fired || t - last >= config.refractory_period_ns) {
                        out.events.push_back(Event{t, static_cast<std::uint16_t>(x),
                                                   static_cast<std::uint16_t>(y), pol});
                        fired = true;
                        last = t;
                    }
                    ref = target;
                }
            }
        }
    }

    append_noise(out.events, w, h, frames.timestamps_ns.front(), frames.timestamps_ns.back(), config, rng);
    std::sort(out.events.begin(), out.events.end(), event_less);
    return out;
}

}  // namespace msx
