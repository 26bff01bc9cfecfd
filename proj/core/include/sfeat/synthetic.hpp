#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "sfeat/homography.hpp"
#include "sfeat/image.hpp"

namespace sfeat {

struct AugmentationConfig {
  int crop = 64;
  /// Each crop corner moves by up to this fraction of the crop size.
  double perspective_jitter = 0.15;
  bool photometric = true;
  double brightness = 0.2;   // additive shift range +-
  double contrast = 0.3;     // gain range 1 +- contrast around mid-gray
  double hue = 0.1;          // per-channel gain range 1 +- hue
  double noise = 0.02;       // max std-dev of additive gaussian noise
  int max_retries = 20;

  /// No geometric or photometric change.
  static AugmentationConfig none(int crop);
  void validate() const;
};

struct PhotometricParams {
  double brightness = 0.0;
  double contrast = 1.0;
  std::array<double, 3> channel_gain = {1.0, 1.0, 1.0};
  double noise_sigma = 0.0;
};

/// Two aligned views of one scene and the exact mapping between them.
struct PairSample {
  Image first;
  Image second;
  Homography homography;  // first -> second pixel coordinates
  CorrespondenceMap correspondence;
  PhotometricParams photometric;
  int crop_x = 0;
  int crop_y = 0;
};

/// Crops the first view from source, warps a second view through a random
/// homography, then applies a random photometric change to the second view.
/// Throws NumericError if no valid homography is found within max_retries.
PairSample synth_pair(const Image& source, std::mt19937_64& rng, const AugmentationConfig& cfg);

/// Reference crop from the source center plus `targets` independently
/// warped and photometrically changed views; homographies[k] maps the
/// reference onto images[k + 1].
struct SyntheticSequence {
  std::vector<Image> images;
  std::vector<Homography> homographies;
};

SyntheticSequence synth_sequence(const Image& source, std::size_t targets, std::mt19937_64& rng,
                                 const AugmentationConfig& cfg);

/// Photometric transform applied in place; identity parameters are exact.
void apply_photometric(Image& image, const PhotometricParams& params, std::mt19937_64& rng);

/// Procedural RGB scene (gradient background, polygons, ellipses, checker
/// patches, stripes). Deterministic in seed.
Image generate_scene(int height, int width, std::uint64_t seed);

std::vector<Image> generate_corpus(std::size_t count, int height, int width, std::uint64_t seed);

/// Stateless 64-bit mixing used to derive per-sample seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace sfeat
