#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "sfeat/image.hpp"
#include "sfeat/network.hpp"

namespace sfeat {

struct Keypoint {
  float x = 0.0f;  // original image frame
  float y = 0.0f;
  float scale = 1.0f;
  float score = 0.0f;
};

/// Keypoints by descending score with one unit-norm descriptor row each.
struct KeypointSet {
  std::vector<Keypoint> keypoints;
  std::size_t dim = 0;
  std::vector<float> descriptors;  // row-major [size, dim]

  std::size_t size() const { return keypoints.size(); }
  bool empty() const { return keypoints.empty(); }
  const float* row(std::size_t i) const { return descriptors.data() + i * dim; }
};

struct ExtractConfig {
  double rel_thresh = 0.7;
  double rep_thresh = 0.7;
  std::size_t topk = 5000;
  /// Candidates must be strict maxima of R in a (2r+1)^2 window.
  int nms_radius = 3;

  void validate() const;
};

/// Strict local maxima of R that pass both thresholds, ranked by R*S with
/// row-major order breaking ties. Descriptors are read from X at each pixel.
KeypointSet extract(const FeatureMaps& maps, const ExtractConfig& cfg);

/// count distinct pixels drawn uniformly, scored 0, with descriptors from X.
/// Baseline detector with the same descriptors as a trained one.
KeypointSet random_keypoints(const FeatureMaps& maps, std::size_t count, std::mt19937_64& rng);

/// 2^(-k/4) for k = 0, 1, ... while the smaller image side stays >= 16.
std::vector<double> default_scales(int height, int width);

using Detector = std::function<FeatureMaps(const ad::Tensor&)>;

/// Runs the detector on each rescaled image, maps coordinates back to the
/// original frame, drops detections closer than nms_radius to a higher
/// scoring one, and keeps the global top-k.
KeypointSet extract_multiscale(const Detector& detector, const Image& image,
                               const std::vector<double>& scales, const ExtractConfig& cfg);
KeypointSet extract_multiscale(const Network& net, const Image& image,
                               const std::vector<double>& scales, const ExtractConfig& cfg);

}  // namespace sfeat
