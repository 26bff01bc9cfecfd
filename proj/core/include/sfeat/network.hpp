#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sfeat/graph.hpp"

namespace sfeat {

/// Shape of the detector/descriptor backbone.
struct BackboneConfig {
  std::size_t input_channels = 3;
  std::size_t descriptor_dim = 32;
  /// Output channels of the dilated 3x3 trunk layers.
  std::vector<std::size_t> channel_widths = {8, 8, 16, 16, 32};
  /// Three depthwise-separable tail layers; plain 3x3 convs when false.
  bool use_dsc_tail = true;

  /// 32-d descriptors, five trunk layers. Default for tests and desk training.
  static BackboneConfig desk();
  /// 128-d descriptors with L2Net trunk widths.
  static BackboneConfig full();

  /// Throws ConfigError on invalid values.
  void validate() const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Trunk layer i uses dilation 2^(i/2), capped at 4, in place of striding.
int trunk_dilation(std::size_t layer);

struct NamedParameter {
  std::string name;
  ad::Tensor value;
};

/// Names and shapes of every parameter, in storage order.
std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const BackboneConfig& config);

/// Descriptor, reliability and repeatability maps of one image.
struct FeatureMaps {
  ad::Tensor descriptors;    // [D,H,W], unit norm per pixel
  ad::Tensor reliability;    // [1,H,W] in [0,1]
  ad::Tensor repeatability;  // [1,H,W] in [0,1]
};

/// Graph handles of the three maps, for training.
struct FeatureMapVars {
  ad::Var descriptors;
  ad::Var reliability;
  ad::Var repeatability;
};

inline constexpr std::size_t kMinInputSize = 16;

class Network {
 public:
  /// Deterministic He-uniform initialization from seed; biases start at zero.
  static Network build(const BackboneConfig& config, std::uint64_t seed);
  /// Adopts existing parameters; names and shapes must match the layout.
  static Network from_parameters(const BackboneConfig& config, std::vector<NamedParameter> params);

  const BackboneConfig& config() const { return config_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<NamedParameter>& mutable_parameters() { return params_; }
  std::size_t parameter_count() const;

  /// Leaf handles for every parameter in graph g.
  std::vector<ad::Var> bind(ad::Graph& g, bool requires_grad) const;

  /// Differentiable forward pass of image[3,H,W] using bound parameters.
  /// Binding once and calling this for both images of a pair shares weights.
  FeatureMapVars forward(const std::vector<ad::Var>& params, ad::Var image) const;

  FeatureMaps forward(const ad::Tensor& image) const;
  std::pair<FeatureMaps, FeatureMaps> forward_pair(const ad::Tensor& first,
                                                   const ad::Tensor& second) const;

 private:
  Network(BackboneConfig config, std::vector<NamedParameter> params);

  BackboneConfig config_;
  std::vector<NamedParameter> params_;
};

/// Throws ShapeError unless image is [C_in,H,W] with H,W >= 16, and
/// NumericError if it holds non-finite values.
void check_network_input(const BackboneConfig& config, const ad::Tensor& image);

}  // namespace sfeat
