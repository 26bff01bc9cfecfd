#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfeat/adam.hpp"
#include "sfeat/covariance_loss.hpp"
#include "sfeat/detection_losses.hpp"
#include "sfeat/network.hpp"
#include "sfeat/synthetic.hpp"

namespace sfeat {

/// Training recipe. Defaults are the desk preset: 64 px crops, 32-d
/// descriptors, a step budget instead of epochs.
struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 8;
  std::size_t steps = 200;
  /// When nonzero, overrides steps with epochs * ceil(corpus / batch_size).
  std::size_t epochs = 0;
  std::uint64_t seed = 1;

  BackboneConfig backbone = BackboneConfig::desk();
  AugmentationConfig augmentation;
  RepeatabilityConfig repeatability;
  ReliabilityConfig reliability;
  LossWeights weights;

  bool no_style = false;
  bool no_structure = false;
  /// Plain 3x3 convolutions in the tail instead of depthwise-separable ones.
  bool no_dsc = false;

  /// Write step_<n>.ckpt every this many steps; 0 disables.
  std::size_t checkpoint_every = 0;
  /// Pairs of a batch processed concurrently. Results do not depend on it.
  unsigned threads = 1;

  /// Backbone with the no_dsc flag applied.
  BackboneConfig network_config() const;
  CovLossOptions cov_options() const { return {!no_style, !no_structure}; }
  void validate() const;
};

/// "key = value" lines; '#' starts a comment. A "preset = desk|full" line is
/// applied before every other key regardless of its position. Unknown keys
/// and malformed values throw ConfigError naming the line.
TrainConfig parse_train_config(const std::string& text, const std::string& source = "<config>");
TrainConfig load_train_config(const std::filesystem::path& path);

/// Every key with its current value, parseable by parse_train_config.
std::string format_train_config(const TrainConfig& cfg);

}  // namespace sfeat
