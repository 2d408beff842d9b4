#include "msx/voxel.hpp"

#include <numeric>

#include "msx/errors.hpp"

namespace msx {

double VoxelGrid::total() const {
    return std::accumulate(values.begin(), values.end(), 0.0);
}

VoxelGrid bin_event_range(const EventStream& stream, std::size_t first, std::size_t last, int bins,
                          std::int64_t window_ns, std::int64_t start_ns) {
    if (bins < 1) {
        throw DomainError("bin_events: need at least one bin");
    }
    if (window_ns <= 0) {
        throw DomainError("bin_events: window must be positive");
    }
    VoxelGrid grid(bins, stream.height, stream.width);
    for (std::size_t i = first; i < last; ++i) {
        const Event& e = stream.events[i];
        const std::int64_t t = e.t_ns - start_ns;
        if (t < 0 || t > window_ns || e.x >= stream.width || e.y >= stream.height) {
            continue;
        }
        const int bin = t == window_ns ? bins - 1 : static_cast<int>(t * bins / window_ns);
        grid.at(bin, e.polarity > 0 ? 0 : 1, e.y, e.x) += 1.0F;
    }
    return grid;
}

VoxelGrid bin_events(const EventStream& stream, int bins, std::int64_t window_ns, std::int64_t start_ns) {
    return bin_event_range(stream, 0, stream.events.size(), bins, window_ns, start_ns);
}

std::vector<Plane> polarity_sum(const VoxelGrid& grid) {
    std::vector<Plane> frames;
    frames.reserve(grid.bins);
    const std::size_t plane = static_cast<std::size_t>(grid.height) * grid.width;
    for (int t = 0; t < grid.bins; ++t) {
        Plane f(grid.width, grid.height);
        const float* pos = &grid.values[grid.index(t, 0, 0, 0)];
        const float* neg = &grid.values[grid.index(t, 1, 0, 0)];
        for (std::size_t p = 0; p < plane; ++p) {
            f.data[p] = pos[p] - neg[p];
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace msx
