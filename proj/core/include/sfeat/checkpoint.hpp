#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "sfeat/network.hpp"

namespace sfeat {

/// Adam moments, one tensor per network parameter in storage order.
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<ad::Tensor> first_moment;
  std::vector<ad::Tensor> second_moment;

  static OptimizerState zeros_like(const Network& net);
};

struct Checkpoint {
  Network network;
  std::optional<OptimizerState> optimizer;
  std::uint64_t training_step = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, little-endian:
///   "SFTC" | u32 version | u32 input_channels | u32 descriptor_dim |
///   u8 use_dsc_tail | u32 n_widths | u32 widths[n] | u64 training_step |
///   u32 n_params | n_params x (u32 name_len | name | u32 ndim | u32 dims[ndim] |
///   f64 payload[prod(dims)]) | u8 has_optimizer |
///   [u64 adam_step | f64 first moments... | f64 second moments...]
void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const OptimizerState* optimizer = nullptr, std::uint64_t training_step = 0);

/// Throws DataError on I/O failure, bad magic, version mismatch, shape or
/// config disagreement, truncated payloads and trailing bytes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sfeat
