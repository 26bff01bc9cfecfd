#include "sfeat/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "sfeat/error.hpp"

namespace sfeat {

Image::Image(int c, int h, int w, double fill)
    : channels(c), height(h), width(w),
      data(static_cast<std::size_t>(std::max(c, 0)) * std::max(h, 0) * std::max(w, 0), fill) {}

namespace {

class PnmParser {
 public:
  PnmParser(std::vector<unsigned char> bytes, std::filesystem::path path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::string token() {
    skip_space_and_comments();
    std::string t;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) t.push_back(static_cast<char>(bytes_[pos_++]));
    if (t.empty()) fail("unexpected end of header");
    return t;
  }

  long number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      fail("expected a number, got '" + t + "'");
    }
    return std::stol(t);
  }

  // Exactly one whitespace byte separates the header from binary data.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing header terminator");
    ++pos_;
  }

  unsigned raw(bool two_bytes) {
    const std::size_t n = two_bytes ? 2 : 1;
    if (pos_ + n > bytes_.size()) fail("pixel data truncated");
    unsigned v = bytes_[pos_];
    if (two_bytes) v = (v << 8) | bytes_[pos_ + 1];
    pos_ += n;
    return v;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError("malformed image '" + path_.string() + "': " + why);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::vector<unsigned char> bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  PnmParser p(std::move(bytes), path);
  const std::string magic = p.token();
  int channels = 0;
  bool ascii = false;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else if (magic == "P2") {
    channels = 1;
    ascii = true;
  } else if (magic == "P3") {
    channels = 3;
    ascii = true;
  } else {
    p.fail("unsupported magic '" + magic + "'");
  }
  const long width = p.number();
  const long height = p.number();
  const long maxval = p.number();
  if (width < 1 || height < 1 || width > 1 << 15 || height > 1 << 15) p.fail("bad dimensions");
  if (maxval < 1 || maxval > 65535) p.fail("bad maxval");
  if (!ascii) p.end_header();

  Image img(channels, static_cast<int>(height), static_cast<int>(width));
  const double inv = 1.0 / static_cast<double>(maxval);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const long v = ascii ? p.number() : static_cast<long>(p.raw(maxval > 255));
        if (v > maxval) p.fail("sample exceeds maxval");
        img.at(c, y, x) = static_cast<double>(v) * inv;
      }
    }
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("write_pnm supports 1 or 3 channels, got " + std::to_string(image.channels));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * image.channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

Image to_rgb(const Image& image) {
  if (image.channels == 3) return image;
  if (image.channels != 1) {
    throw DataError("cannot convert " + std::to_string(image.channels) + "-channel image to RGB");
  }
  Image out(3, image.height, image.width);
  for (int c = 0; c < 3; ++c) {
    std::copy(image.data.begin(), image.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(c) * image.height * image.width);
  }
  return out;
}

ad::Tensor to_tensor(const Image& image) {
  const Image rgb = to_rgb(image);
  return ad::Tensor(ad::Shape{3, static_cast<std::size_t>(rgb.height), static_cast<std::size_t>(rgb.width)},
                    rgb.data);
}

Image from_tensor(const ad::Tensor& t) {
  if (t.ndim() != 3) throw ShapeError("from_tensor expects [C,H,W]");
  Image img(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)));
  img.data = t.data;
  return img;
}

bool sample_bilinear(const Image& image, int c, double x, double y, double& out) {
  if (!(x >= 0.0 && y >= 0.0 && x <= image.width - 1 && y <= image.height - 1)) return false;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  double v = (1.0 - fx) * (1.0 - fy) * image.at(c, y0, x0);
  if (fx != 0.0) v += fx * (1.0 - fy) * image.at(c, y0, x1);
  if (fy != 0.0) v += (1.0 - fx) * fy * image.at(c, y1, x0);
  if (fx != 0.0 && fy != 0.0) v += fx * fy * image.at(c, y1, x1);
  out = v;
  return true;
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height < 1 || width < 1) throw ConfigError("resize target must be positive");
  if (height == image.height && width == image.width) return image;
  Image out(image.channels, height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
      for (int x = 0; x < width; ++x) {
        const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
        double v = 0.0;
        sample_bilinear(image, c, src_x, src_y, v);
        out.at(c, y, x) = v;
      }
    }
  }
  return out;
}

Image crop(const Image& image, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > image.width || y0 + h > image.height) {
    throw ConfigError("crop window outside image");
  }
  Image out(image.channels, h, w);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = image.at(c, y0 + y, x0 + x);
    }
  }
  return out;
}

}  // namespace sfeat
