#pragma once

#include <filesystem>
#include <vector>

#include "sfeat/tensor.hpp"

namespace sfeat {

/// Planar (channel-major) image with values nominally in [0,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0);

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool empty() const { return data.empty(); }
};

/// Binary PGM (P5) or PPM (P6), 8 or 16 bit. ASCII P2/P3 are accepted too.
Image read_pnm(const std::filesystem::path& path);
/// Writes 8-bit P5 for one channel, P6 for three.
void write_pnm(const std::filesystem::path& path, const Image& image);

/// Gray images are replicated to three channels.
Image to_rgb(const Image& image);
ad::Tensor to_tensor(const Image& image);
Image from_tensor(const ad::Tensor& t);

/// Bilinear sample of channel c at (x, y); false when outside [0,W-1]x[0,H-1].
bool sample_bilinear(const Image& image, int c, double x, double y, double& out);

/// Resamples to (height, width) with pixel-center alignment.
Image resize_bilinear(const Image& image, int height, int width);

/// Crop of size (h, w) at (x0, y0); must lie inside the image.
Image crop(const Image& image, int x0, int y0, int w, int h);

}  // namespace sfeat
