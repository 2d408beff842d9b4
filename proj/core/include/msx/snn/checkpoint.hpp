#pragma once

#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "msx/snn/model.hpp"

namespace msx::snn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, little-endian: "EVCK" | version u32 | json length u32 | json (model config
// under "model", anything else is metadata) | blob count u32 | per blob: name length
// u16, name, rank u8, dims u32 x rank, f32 values.
void save_checkpoint(const std::filesystem::path& path, SpikingVgg<float>& model, const nlohmann::json& meta);

struct LoadedCheckpoint {
    nlohmann::json meta;
    std::unique_ptr<SpikingVgg<float>> model;
};

// FormatError on a malformed file; DomainError if the blobs do not fit the config.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace msx::snn
