#include "sfeat/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sfeat/error.hpp"
#include "sfeat/ops.hpp"

namespace sfeat {

using ad::Shape;
using ad::Tensor;
using ad::Var;

BackboneConfig BackboneConfig::desk() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::full() {
  BackboneConfig c;
  c.descriptor_dim = 128;
  c.channel_widths = {32, 32, 64, 64, 128, 128};
  return c;
}

void BackboneConfig::validate() const {
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (descriptor_dim < 2) throw ConfigError("descriptor_dim must be >= 2");
  if (channel_widths.empty()) throw ConfigError("channel_widths must not be empty");
  for (std::size_t w : channel_widths) {
    if (w < 1) throw ConfigError("channel widths must be >= 1");
  }
}

int trunk_dilation(std::size_t layer) { return std::min(4, 1 << (layer / 2)); }

std::vector<std::pair<std::string, Shape>> parameter_layout(const BackboneConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, Shape>> layout;
  std::size_t c_in = config.input_channels;
  for (std::size_t i = 0; i < config.channel_widths.size(); ++i) {
    const std::size_t c_out = config.channel_widths[i];
    const std::string prefix = "trunk." + std::to_string(i);
    layout.emplace_back(prefix + ".weight", Shape{c_out, c_in, 3, 3});
    layout.emplace_back(prefix + ".bias", Shape{c_out});
    c_in = c_out;
  }
  const std::size_t d = config.descriptor_dim;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string prefix = "tail." + std::to_string(i);
    if (config.use_dsc_tail) {
      layout.emplace_back(prefix + ".depthwise", Shape{c_in, 1, 3, 3});
      layout.emplace_back(prefix + ".pointwise", Shape{d, c_in, 1, 1});
    } else {
      layout.emplace_back(prefix + ".weight", Shape{d, c_in, 3, 3});
    }
    layout.emplace_back(prefix + ".bias", Shape{d});
    c_in = d;
  }
  layout.emplace_back("head.reliability.weight", Shape{2, d, 1, 1});
  layout.emplace_back("head.reliability.bias", Shape{2});
  layout.emplace_back("head.repeatability.weight", Shape{2, d, 1, 1});
  layout.emplace_back("head.repeatability.bias", Shape{2});
  return layout;
}

Network::Network(BackboneConfig config, std::vector<NamedParameter> params)
    : config_(std::move(config)), params_(std::move(params)) {}

Network Network::build(const BackboneConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<NamedParameter> params;
  for (auto& [name, shape] : parameter_layout(config)) {
    Tensor t(shape, 0.0);
    if (shape.size() == 4) {
      // fan-in of a [C_out, C_in, k, k] kernel; depthwise kernels have C_in == 1
      const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
      const double bound = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.data) v = dist(rng);
    }
    params.push_back(NamedParameter{name, std::move(t)});
  }
  return Network(config, std::move(params));
}

Network Network::from_parameters(const BackboneConfig& config, std::vector<NamedParameter> params) {
  const auto layout = parameter_layout(config);
  if (layout.size() != params.size()) {
    throw DataError("expected " + std::to_string(layout.size()) + " parameters, got " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params[i].name != layout[i].first) {
      throw DataError("parameter " + std::to_string(i) + " is '" + params[i].name +
                      "', expected '" + layout[i].first + "'");
    }
    if (params[i].value.shape != layout[i].second) {
      throw DataError("parameter '" + params[i].name + "' has shape " +
                      ad::shape_string(params[i].value.shape) + ", expected " +
                      ad::shape_string(layout[i].second));
    }
  }
  return Network(config, std::move(params));
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<Var> Network::bind(ad::Graph& g, bool requires_grad) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(g.leaf(p.value, requires_grad));
  return vars;
}

void check_network_input(const BackboneConfig& config, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != config.input_channels) {
    throw ShapeError("network input must be [" + std::to_string(config.input_channels) +
                     ",H,W], got " + ad::shape_string(image.shape));
  }
  if (image.dim(1) < kMinInputSize || image.dim(2) < kMinInputSize) {
    throw ShapeError("network input " + ad::shape_string(image.shape) + " is smaller than " +
                     std::to_string(kMinInputSize) + "x" + std::to_string(kMinInputSize));
  }
  if (!image.all_finite()) throw NumericError("network input contains non-finite values");
}

namespace {

// Two-logit softmax, first channel kept: sigmoid(l0 - l1).
Var softmax_first(Var logits) {
  return ad::sigmoid(ad::subtract(ad::select_channel(logits, 0), ad::select_channel(logits, 1)));
}

}  // namespace

FeatureMapVars Network::forward(const std::vector<Var>& params, Var image) const {
  check_network_input(config_, image.value());
  if (params.size() != params_.size()) throw ShapeError("parameter binding size mismatch");
  std::size_t p = 0;
  Var h = image;
  for (std::size_t i = 0; i < config_.channel_widths.size(); ++i) {
    const int dil = trunk_dilation(i);
    h = ad::conv2d(h, params[p], ad::ConvOptions{1, dil, dil});
    h = ad::relu(ad::add_channel_bias(h, params[p + 1]));
    p += 2;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (config_.use_dsc_tail) {
      h = ad::depthwise_separable_conv(h, params[p], params[p + 1]);
      h = ad::add_channel_bias(h, params[p + 2]);
      p += 3;
    } else {
      h = ad::add_channel_bias(ad::conv2d(h, params[p], ad::ConvOptions{1, 1, 1}), params[p + 1]);
      p += 2;
    }
    if (i < 2) h = ad::relu(h);
  }
  FeatureMapVars maps;
  maps.descriptors = ad::l2_normalize(h);
  const Var squared = ad::square(h);
  const Var rel_logits = ad::add_channel_bias(ad::conv2d(squared, params[p]), params[p + 1]);
  const Var rep_logits = ad::add_channel_bias(ad::conv2d(squared, params[p + 2]), params[p + 3]);
  maps.reliability = softmax_first(rel_logits);
  maps.repeatability = softmax_first(rep_logits);
  return maps;
}

FeatureMaps Network::forward(const Tensor& image) const {
  ad::Graph g;
  const auto params = bind(g, false);
  const FeatureMapVars vars = forward(params, g.constant(image));
  return FeatureMaps{vars.descriptors.value(), vars.reliability.value(),
                     vars.repeatability.value()};
}

std::pair<FeatureMaps, FeatureMaps> Network::forward_pair(const Tensor& first,
                                                          const Tensor& second) const {
  ad::Graph g;
  const auto params = bind(g, false);
  const FeatureMapVars a = forward(params, g.constant(first));
  const FeatureMapVars b = forward(params, g.constant(second));
  return {FeatureMaps{a.descriptors.value(), a.reliability.value(), a.repeatability.value()},
          FeatureMaps{b.descriptors.value(), b.reliability.value(), b.repeatability.value()}};
}

}  // namespace sfeat
