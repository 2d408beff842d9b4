#pragma once

#include <cstdint>
#include <string_view>

#include "msx/dvs_sim.hpp"

namespace msx {

enum class Eye : std::uint8_t { Left = 0, Right = 1 };

std::string_view to_string(Eye eye);
Eye eye_from_string(std::string_view name);

struct LabeledSample {
    EventStream stream;  // ROI-cropped, coordinates relative to the ROI origin
    int class_id = 0;
    Eye eye = Eye::Left;
    double peak_amplitude_deg = 0.0;
    std::int64_t duration_ns = 0;
    std::uint64_t raw_event_count = 0;
    std::uint64_t resampled_event_count = 0;
    std::uint64_t seed = 0;
};

}  // namespace msx
