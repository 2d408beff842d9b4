#pragma once

#include <filesystem>
#include <vector>

#include "msx/farneback.hpp"
#include "msx/voxel.hpp"

namespace msx {

inline constexpr double kDefaultFlowLambda = 0.5;

// Scales a frame by its max-absolute value into [-1, 1]; all-zero frames stay zero.
Plane normalize_max_abs(const Plane& frame);

// Farneback flow between each adjacent pair of normalized polarity-summed frames;
// T bins give T-1 fields.
std::vector<FlowField> flow_targets(const VoxelGrid& grid, const FarnebackParams& params = {});

// Mean over fields and pixels of (du^2 + dv^2).
double flow_loss(const std::vector<FlowField>& predicted, const std::vector<FlowField>& target);

double total_loss(double class_loss, double flow_loss, double lambda = kDefaultFlowLambda);

// Cache file: magic "EVFL" | fields u32 | height u32 | width u32, then
// fields x H x W x {u, v} float32, all little-endian.
void write_flow_cache(const std::vector<FlowField>& fields, const std::filesystem::path& path);
std::vector<FlowField> read_flow_cache(const std::filesystem::path& path);

}  // namespace msx
