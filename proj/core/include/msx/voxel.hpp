#pragma once

#include <cstdint>
#include <vector>

#include "msx/dvs_sim.hpp"

namespace msx {

// Row-major real-valued 2-D field.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    Plane() = default;
    Plane(int w, int h, float fill = 0.0F) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const Plane&) const = default;
};

inline constexpr int kDefaultBins = 10;
inline constexpr std::int64_t kDefaultWindowNs = 3'000'000;

// T x 2 x H x W event counts; channel 0 positive, channel 1 negative polarity.
struct VoxelGrid {
    int bins = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;

    VoxelGrid() = default;
    VoxelGrid(int t, int h, int w) : bins(t), height(h), width(w), values(static_cast<std::size_t>(t) * 2 * h * w, 0.0F) {}

    std::size_t index(int t, int c, int y, int x) const {
        return ((static_cast<std::size_t>(t) * 2 + c) * height + y) * width + x;
    }
    float& at(int t, int c, int y, int x) { return values[index(t, c, y, x)]; }
    float at(int t, int c, int y, int x) const { return values[index(t, c, y, x)]; }

    double total() const;
};

// Events with t - start in [0, window] land in bin floor((t - start) * T / window); an
// event exactly at the window end goes to the last bin. Events outside are dropped.
VoxelGrid bin_events(const EventStream& stream, int bins, std::int64_t window_ns, std::int64_t start_ns = 0);

// Same, restricted to the half-open index range [first, last) of an already sorted stream.
VoxelGrid bin_event_range(const EventStream& stream, std::size_t first, std::size_t last, int bins,
                          std::int64_t window_ns, std::int64_t start_ns);

// Per bin, positive minus negative counts.
std::vector<Plane> polarity_sum(const VoxelGrid& grid);

}  // namespace msx
