#include "sfeat/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "sfeat/error.hpp"

namespace sfeat {

AugmentationConfig AugmentationConfig::none(int crop) {
  AugmentationConfig c;
  c.crop = crop;
  c.perspective_jitter = 0.0;
  c.photometric = false;
  return c;
}

void AugmentationConfig::validate() const {
  if (crop < 16) throw ConfigError("crop must be >= 16");
  if (perspective_jitter < 0.0 || perspective_jitter >= 0.5) {
    throw ConfigError("perspective_jitter must be in [0, 0.5)");
  }
  if (brightness < 0.0 || contrast < 0.0 || contrast >= 1.0 || hue < 0.0 || hue >= 1.0 ||
      noise < 0.0) {
    throw ConfigError("photometric ranges out of bounds");
  }
  if (max_retries < 1) throw ConfigError("max_retries must be >= 1");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void apply_photometric(Image& image, const PhotometricParams& p, std::mt19937_64& rng) {
  const double offset = 0.5 - 0.5 * p.contrast + p.brightness;
  std::normal_distribution<double> noise(0.0, p.noise_sigma > 0.0 ? p.noise_sigma : 1.0);
  for (int c = 0; c < image.channels; ++c) {
    const double gain = p.channel_gain[static_cast<std::size_t>(std::min(c, 2))];
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        double v = (p.contrast * image.at(c, y, x) + offset) * gain;
        if (p.noise_sigma > 0.0) v += noise(rng);
        image.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
}

namespace {

bool convex_quad(const std::array<Point2, 4>& q) {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const Point2& a = q[i];
    const Point2& b = q[(i + 1) % 4];
    const Point2& c = q[(i + 2) % 4];
    const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if (std::fabs(cross) < 1e-6) return false;
    const int s = cross > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

Homography sample_homography(std::mt19937_64& rng, const AugmentationConfig& cfg) {
  if (cfg.perspective_jitter == 0.0) return Homography();
  const double size = cfg.crop - 1;
  const double amp = cfg.perspective_jitter * cfg.crop;
  std::uniform_real_distribution<double> jitter(-amp, amp);
  const std::array<Point2, 4> src = {Point2{0, 0}, Point2{size, 0}, Point2{size, size}, Point2{0, size}};
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    std::array<Point2, 4> dst = src;
    for (auto& p : dst) {
      p.x += jitter(rng);
      p.y += jitter(rng);
    }
    if (!convex_quad(dst)) continue;
    try {
      return Homography::from_four_points(src, dst);
    } catch (const NumericError&) {
      continue;
    }
  }
  throw NumericError("could not sample a non-degenerate homography in " +
                     std::to_string(cfg.max_retries) + " attempts");
}

PhotometricParams sample_photometric(std::mt19937_64& rng, const AugmentationConfig& cfg) {
  PhotometricParams p;
  if (!cfg.photometric) return p;
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  p.brightness = cfg.brightness > 0 ? uniform(-cfg.brightness, cfg.brightness) : 0.0;
  p.contrast = cfg.contrast > 0 ? uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast) : 1.0;
  for (double& g : p.channel_gain) g = cfg.hue > 0 ? uniform(1.0 - cfg.hue, 1.0 + cfg.hue) : 1.0;
  p.noise_sigma = cfg.noise > 0 ? uniform(0.0, cfg.noise) : 0.0;
  return p;
}

}  // namespace

namespace {

/// Second view: the crop window warped by h, sampled from the whole source so
/// content beyond the crop fills in where available, then photometric change.
Image render_view(const Image& rgb, int crop_x, int crop_y, int size, const Homography& h,
                  const PhotometricParams& photometric, std::mt19937_64& rng) {
  const Homography back = h.inverse();
  Image out(3, size, size, 0.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const auto src = back.try_apply({static_cast<double>(x), static_cast<double>(y)});
      if (!src) continue;
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        if (sample_bilinear(rgb, c, src->x + crop_x, src->y + crop_y, v)) out.at(c, y, x) = v;
      }
    }
  }
  apply_photometric(out, photometric, rng);
  return out;
}

Image checked_rgb(const Image& source, int crop) {
  Image rgb = to_rgb(source);
  if (rgb.width < crop || rgb.height < crop) {
    throw ConfigError("source image " + std::to_string(rgb.width) + "x" + std::to_string(rgb.height) +
                      " smaller than crop " + std::to_string(crop));
  }
  return rgb;
}

}  // namespace

PairSample synth_pair(const Image& source, std::mt19937_64& rng, const AugmentationConfig& cfg) {
  cfg.validate();
  const Image rgb = checked_rgb(source, cfg.crop);
  PairSample s;
  s.crop_x = std::uniform_int_distribution<int>(0, rgb.width - cfg.crop)(rng);
  s.crop_y = std::uniform_int_distribution<int>(0, rgb.height - cfg.crop)(rng);
  s.first = crop(rgb, s.crop_x, s.crop_y, cfg.crop, cfg.crop);
  s.homography = sample_homography(rng, cfg);
  s.photometric = sample_photometric(rng, cfg);
  s.second = render_view(rgb, s.crop_x, s.crop_y, cfg.crop, s.homography, s.photometric, rng);
  const auto n = static_cast<std::size_t>(cfg.crop);
  s.correspondence = build_correspondence_map(s.homography, n, n, n, n);
  return s;
}

SyntheticSequence synth_sequence(const Image& source, std::size_t targets, std::mt19937_64& rng,
                                 const AugmentationConfig& cfg) {
  cfg.validate();
  const Image rgb = checked_rgb(source, cfg.crop);
  const int x0 = (rgb.width - cfg.crop) / 2;
  const int y0 = (rgb.height - cfg.crop) / 2;
  SyntheticSequence seq;
  seq.images.push_back(crop(rgb, x0, y0, cfg.crop, cfg.crop));
  for (std::size_t k = 0; k < targets; ++k) {
    const Homography h = sample_homography(rng, cfg);
    const PhotometricParams p = sample_photometric(rng, cfg);
    seq.images.push_back(render_view(rgb, x0, y0, cfg.crop, h, p, rng));
    seq.homographies.push_back(h);
  }
  return seq;
}

Image generate_scene(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  Image img(3, height, width);
  std::array<double, 3> c0, c1;
  for (int c = 0; c < 3; ++c) {
    c0[c] = uniform(0.1, 0.9);
    c1[c] = uniform(0.1, 0.9);
  }
  const double angle = uniform(0.0, 2.0 * M_PI);
  const double dx = std::cos(angle), dy = std::sin(angle);
  const double extent = std::abs(dx) * width + std::abs(dy) * height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t = std::clamp(0.5 + ((x - width / 2.0) * dx + (y - height / 2.0) * dy) / extent, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = (1 - t) * c0[c] + t * c1[c];
    }
  }

  const int shapes = 10 + static_cast<int>(rng() % 8);
  for (int s = 0; s < shapes; ++s) {
    std::array<double, 3> color;
    for (double& v : color) v = uniform(0.0, 1.0);
    const double cx = uniform(0, width), cy = uniform(0, height);
    const double r = uniform(0.06, 0.22) * std::min(width, height);
    const int kind = static_cast<int>(rng() % 4);
    std::array<Point2, 6> poly{};
    int n_vertices = 3 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n_vertices; ++k) {
      const double a = 2.0 * M_PI * k / n_vertices + uniform(-0.4, 0.4);
      const double rr = r * uniform(0.5, 1.0);
      poly[k] = {cx + rr * std::cos(a), cy + rr * std::sin(a)};
    }
    const double rx = r, ry = r * uniform(0.4, 1.0), rot = uniform(0, M_PI);
    const double cell = std::max(2.0, r / uniform(2.0, 4.0));
    const double stripe_angle = uniform(0, M_PI);
    std::array<double, 3> color2;
    for (double& v : color2) v = uniform(0.0, 1.0);

    const int x0 = std::max(0, static_cast<int>(cx - r - 1)), x1 = std::min(width - 1, static_cast<int>(cx + r + 1));
    const int y0 = std::max(0, static_cast<int>(cy - r - 1)), y1 = std::min(height - 1, static_cast<int>(cy + r + 1));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x - cx, py = y - cy;
        bool inside = false;
        const std::array<double, 3>* col = &color;
        switch (kind) {
          case 0: {  // polygon, even-odd rule
            for (int k = 0, j = n_vertices - 1; k < n_vertices; j = k++) {
              if (((poly[k].y > y) != (poly[j].y > y)) &&
                  (x < (poly[j].x - poly[k].x) * (y - poly[k].y) / (poly[j].y - poly[k].y) + poly[k].x)) {
                inside = !inside;
              }
            }
            break;
          }
          case 1: {  // rotated ellipse
            const double u = px * std::cos(rot) + py * std::sin(rot);
            const double v = -px * std::sin(rot) + py * std::cos(rot);
            inside = (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
            break;
          }
          case 2: {  // checker square
            inside = std::abs(px) <= r * 0.8 && std::abs(py) <= r * 0.8;
            const long cxi = static_cast<long>(std::floor((px + r) / cell));
            const long cyi = static_cast<long>(std::floor((py + r) / cell));
            if ((cxi + cyi) % 2 != 0) col = &color2;
            break;
          }
          default: {  // striped disc
            inside = px * px + py * py <= r * r;
            const double s2 = px * std::cos(stripe_angle) + py * std::sin(stripe_angle);
            if (static_cast<long>(std::floor(s2 / cell)) % 2 != 0) col = &color2;
            break;
          }
        }
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = (*col)[c];
      }
    }
  }
  return img;
}

std::vector<Image> generate_corpus(std::size_t count, int height, int width, std::uint64_t seed) {
  std::vector<Image> corpus;
  corpus.reserve(count);
  for (std::size_t i = 0; i < count; ++i) corpus.push_back(generate_scene(height, width, mix_seed(seed, i)));
  return corpus;
}

}  // namespace sfeat
