#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msx/dvs_sim.hpp"
#include "msx/eye_scene.hpp"
#include "msx/snn/model.hpp"
#include "msx/voxel.hpp"

namespace msx {

inline constexpr int kRejected = -1;

struct WindowDecision {
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;
    std::size_t event_count = 0;
    std::array<double, kNumClasses> probabilities{};
    double max_probability = 0.0;
    int decision = kRejected;  // class id or kRejected
};

struct InferenceOptions {
    std::int64_t window_ns = kDefaultWindowNs;
    std::int64_t stride_ns = 0;  // 0: same as window
    double threshold = 0.5;      // reject when the max class probability is below
    // Windows with fewer events skip the network and get uniform probabilities.
    std::size_t min_events = 1;
    std::optional<std::int64_t> origin_ns;    // default: 0 if duration is set, else first event
    std::optional<std::int64_t> duration_ns;  // default: through the last event
    int batch_size = 32;

    void validate() const;
};

struct InferenceSummary {
    std::size_t windows = 0;
    std::size_t rejected = 0;
    std::array<std::size_t, kNumClasses> decided{};

    std::size_t decided_total() const;
    double percent_decided() const;
    double percent_rejected() const;
};

// Windows [origin + k stride, + window) tile the recording; each is binned into the
// model's T steps and classified in order.
std::vector<WindowDecision> infer_windows(snn::SpikingVgg<float>& model, const EventStream& stream,
                                          const InferenceOptions& options);

InferenceSummary summarize(const std::vector<WindowDecision>& decisions);

// Center crop (or center pad) to the model geometry; events outside are dropped.
EventStream fit_to_geometry(const EventStream& stream, int width, int height);

struct Recording {
    EventStream stream;
    std::optional<std::int64_t> duration_ns;
};

// Plain-text events, one "t_us,x,y,p" per line (p in {0, 1} or {-1, 1}); an optional
// header line. Geometry defaults to max coordinate + 1. FormatError on malformed or
// out-of-bounds records, with the byte offset of the line.
EventStream read_events_csv(const std::filesystem::path& path, std::optional<int> width = std::nullopt,
                            std::optional<int> height = std::nullopt);

// .evms or .csv by extension.
Recording load_recording(const std::filesystem::path& path, std::optional<int> width = std::nullopt,
                         std::optional<int> height = std::nullopt);

std::string format_inference_text(const InferenceSummary& summary, const InferenceOptions& options);
void write_decisions_csv(const std::vector<WindowDecision>& decisions, const std::filesystem::path& path);
void write_summary_csv(const InferenceSummary& summary, const std::filesystem::path& path);

}  // namespace msx
