#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "msx/sample.hpp"

namespace msx {

// .evms layout, all fields little-endian:
//   magic "EVMS" | version u16 = 1 | width u16 | height u16 | class_id u8 | eye u8
//   | reserved u16 | peak_amplitude_millideg u32 | duration_ns u64 | event_count u64
//   then event_count x { t_ns u32 | x u16 | y u16 | polarity u8 (0 neg, 1 pos) | pad u8 }
inline constexpr std::uint16_t kEvmsVersion = 1;
inline constexpr std::size_t kEvmsHeaderBytes = 34;
inline constexpr std::size_t kEvmsRecordBytes = 10;

std::vector<std::uint8_t> encode_evms(const LabeledSample& sample);

// Fields not stored in the file come back as: seed 0, raw and resampled counts equal
// to the stored event count.
LabeledSample decode_evms(std::span<const std::uint8_t> bytes);

void write_stream(const LabeledSample& sample, const std::filesystem::path& path);
LabeledSample read_stream(const std::filesystem::path& path);

}  // namespace msx
