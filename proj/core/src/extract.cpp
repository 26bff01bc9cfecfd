#include "sfeat/extract.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfeat/error.hpp"

namespace sfeat {
namespace {

struct Candidate {
  Keypoint kp;
  std::size_t order = 0;  // scale index and row-major position, for ties
  std::vector<float> descriptor;
};

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.kp.score != b.kp.score) return a.kp.score > b.kp.score;
  return a.order < b.order;
}

void check_maps(const FeatureMaps& maps) {
  const auto& x = maps.descriptors.shape;
  const auto& s = maps.reliability.shape;
  const auto& r = maps.repeatability.shape;
  if (x.size() != 3 || s.size() != 3 || r.size() != 3 || s[0] != 1 || r[0] != 1 || s[1] != x[1] ||
      s[2] != x[2] || r[1] != x[1] || r[2] != x[2]) {
    throw ShapeError("extract: inconsistent maps " + ad::shape_string(x) + ", " +
                     ad::shape_string(s) + ", " + ad::shape_string(r));
  }
}

std::vector<Candidate> candidates(const FeatureMaps& maps, const ExtractConfig& cfg,
                                  std::size_t order_base) {
  check_maps(maps);
  const std::size_t d = maps.descriptors.shape[0];
  const int h = static_cast<int>(maps.repeatability.shape[1]);
  const int w = static_cast<int>(maps.repeatability.shape[2]);
  const auto& rep = maps.repeatability.data;
  const auto& rel = maps.reliability.data;
  const int rad = cfg.nms_radius;
  std::vector<Candidate> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double r = rep[i];
      if (r < cfg.rep_thresh || rel[i] < cfg.rel_thresh) continue;
      bool is_max = true;
      for (int yy = std::max(0, y - rad); is_max && yy <= std::min(h - 1, y + rad); ++yy) {
        for (int xx = std::max(0, x - rad); xx <= std::min(w - 1, x + rad); ++xx) {
          if ((yy != y || xx != x) && rep[static_cast<std::size_t>(yy) * w + xx] >= r) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      Candidate c;
      c.kp = {static_cast<float>(x), static_cast<float>(y), 1.0f, static_cast<float>(r * rel[i])};
      c.order = order_base + i;
      std::vector<double> v(d);
      double norm = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        v[k] = maps.descriptors.data[k * h * w + i];
        norm += v[k] * v[k];
      }
      norm = std::max(std::sqrt(norm), 1e-12);
      c.descriptor.resize(d);
      for (std::size_t k = 0; k < d; ++k) c.descriptor[k] = static_cast<float>(v[k] / norm);
      out.push_back(std::move(c));
    }
  }
  return out;
}

KeypointSet assemble(std::vector<Candidate>& cands, std::size_t dim, std::size_t topk) {
  std::sort(cands.begin(), cands.end(), ranks_before);
  if (cands.size() > topk) cands.resize(topk);
  KeypointSet set;
  set.dim = dim;
  set.keypoints.reserve(cands.size());
  set.descriptors.reserve(cands.size() * dim);
  for (const auto& c : cands) {
    set.keypoints.push_back(c.kp);
    set.descriptors.insert(set.descriptors.end(), c.descriptor.begin(), c.descriptor.end());
  }
  return set;
}

}  // namespace

void ExtractConfig::validate() const {
  if (nms_radius < 1) throw ConfigError("nms_radius must be >= 1");
  if (topk < 1) throw ConfigError("topk must be >= 1");
  if (!std::isfinite(rel_thresh) || !std::isfinite(rep_thresh)) {
    throw ConfigError("extraction thresholds must be finite");
  }
}

KeypointSet extract(const FeatureMaps& maps, const ExtractConfig& cfg) {
  cfg.validate();
  auto cands = candidates(maps, cfg, 0);
  return assemble(cands, maps.descriptors.shape[0], cfg.topk);
}

KeypointSet random_keypoints(const FeatureMaps& maps, std::size_t count, std::mt19937_64& rng) {
  check_maps(maps);
  const std::size_t d = maps.descriptors.shape[0];
  const std::size_t h = maps.descriptors.shape[1];
  const std::size_t w = maps.descriptors.shape[2];
  std::vector<std::size_t> pixels(h * w);
  std::iota(pixels.begin(), pixels.end(), std::size_t{0});
  count = std::min(count, pixels.size());
  // Partial Fisher-Yates: the first count entries become the sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pixels.size() - 1);
    std::swap(pixels[i], pixels[pick(rng)]);
  }
  KeypointSet set;
  set.dim = d;
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t i = pixels[n];
    set.keypoints.push_back({static_cast<float>(i % w), static_cast<float>(i / w), 1.0f, 0.0f});
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) norm += maps.descriptors.data[k * h * w + i] * maps.descriptors.data[k * h * w + i];
    norm = std::max(std::sqrt(norm), 1e-12);
    for (std::size_t k = 0; k < d; ++k) {
      set.descriptors.push_back(static_cast<float>(maps.descriptors.data[k * h * w + i] / norm));
    }
  }
  return set;
}

std::vector<double> default_scales(int height, int width) {
  std::vector<double> scales;
  const double side = std::min(height, width);
  for (int k = 0;; ++k) {
    const double s = std::pow(2.0, -k / 4.0);
    if (std::lround(side * s) < static_cast<long>(kMinInputSize)) break;
    scales.push_back(s);
  }
  return scales;
}

KeypointSet extract_multiscale(const Detector& detector, const Image& image,
                               const std::vector<double>& scales, const ExtractConfig& cfg) {
  cfg.validate();
  if (scales.empty()) throw ConfigError("no extraction scales");
  const Image rgb = to_rgb(image);
  std::vector<Candidate> all;
  std::size_t dim = 0;
  for (std::size_t si = 0; si < scales.size(); ++si) {
    const double s = scales[si];
    if (!(s > 0.0) || (si > 0 && s >= scales[si - 1])) {
      throw ConfigError("scales must be positive and strictly descending");
    }
    const int h = static_cast<int>(std::lround(image.height * s));
    const int w = static_cast<int>(std::lround(image.width * s));
    if (std::min(h, w) < static_cast<int>(kMinInputSize)) {
      throw ConfigError("scale " + std::to_string(s) + " shrinks the image below 16 px");
    }
    const FeatureMaps maps = detector(to_tensor(resize_bilinear(rgb, h, w)));
    dim = maps.descriptors.shape.at(0);
    const std::size_t base = si << 40;
    auto cands = candidates(maps, cfg, base);
    // Pixel centers line up with resize_bilinear's sampling grid.
    const double rx = static_cast<double>(image.width) / w;
    const double ry = static_cast<double>(image.height) / h;
    for (auto& c : cands) {
      if (h != image.height || w != image.width) {
        c.kp.x = static_cast<float>((c.kp.x + 0.5) * rx - 0.5);
        c.kp.y = static_cast<float>((c.kp.y + 0.5) * ry - 0.5);
      }
      c.kp.scale = static_cast<float>(s);
      all.push_back(std::move(c));
    }
  }
  std::sort(all.begin(), all.end(), ranks_before);
  std::vector<Candidate> kept;
  const double r2 = static_cast<double>(cfg.nms_radius) * cfg.nms_radius;
  for (auto& c : all) {
    bool dup = false;
    for (const auto& k : kept) {
      const double dx = c.kp.x - k.kp.x, dy = c.kp.y - k.kp.y;
      if (dx * dx + dy * dy < r2) {
        dup = true;
        break;
      }
    }
    if (!dup) kept.push_back(std::move(c));
    if (kept.size() == cfg.topk) break;
  }
  return assemble(kept, dim, cfg.topk);
}

KeypointSet extract_multiscale(const Network& net, const Image& image,
                               const std::vector<double>& scales, const ExtractConfig& cfg) {
  return extract_multiscale([&net](const ad::Tensor& t) { return net.forward(t); }, image, scales,
                            cfg);
}

}  // namespace sfeat
