#pragma once

#include <cstdint>
#include <filesystem>

#include "sfeat/extract.hpp"

namespace sfeat {

inline constexpr std::uint32_t kDescriptorFileVersion = 1;

/// Little-endian: "SFDK" | u32 version | u32 count | u32 dim |
/// count x (f32 x, f32 y, f32 scale, f32 score) | f32 descriptors[count * dim].
void write_keypoints(const std::filesystem::path& path, const KeypointSet& set);

/// Throws DataError on bad magic, version or length.
KeypointSet read_keypoints(const std::filesystem::path& path);

}  // namespace sfeat
