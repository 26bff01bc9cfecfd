#include "sfeat/mma.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sfeat/error.hpp"

namespace sfeat {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_thresholds(const std::vector<double>& t) {
  if (t.empty()) throw ConfigError("no MMA thresholds");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] >= 0.0) || (i > 0 && t[i] <= t[i - 1])) {
      throw ConfigError("MMA thresholds must be non-negative and ascending");
    }
  }
}

std::string scales_string(const std::vector<double>& scales) {
  if (scales.empty()) return "pyramid";
  std::string s;
  char buf[32];
  for (double v : scales) {
    std::snprintf(buf, sizeof buf, "%s%.6g", s.empty() ? "" : ",", v);
    s += buf;
  }
  return s;
}

struct Canvas {
  int w, h;
  std::vector<unsigned char> rgb;
  Canvas(int width, int height) : w(width), h(height), rgb(static_cast<std::size_t>(width) * height * 3, 255) {}
  void put(int x, int y, const unsigned char* c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    std::copy(c, c + 3, rgb.begin() + (static_cast<std::ptrdiff_t>(y) * w + x) * 3);
  }
  void line(int x0, int y0, int x1, int y1, const unsigned char* c, int thick = 1) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      for (int oy = 0; oy < thick; ++oy)
        for (int ox = 0; ox < thick; ++ox) put(x0 + ox, y0 + oy, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }
};

}  // namespace

std::vector<double> default_mma_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 10; ++i) t.push_back(i);
  return t;
}

MMAReport mma(const MatchSet& matches, const KeypointSet& a, const KeypointSet& b,
              const Homography& h, const std::vector<double>& thresholds) {
  check_thresholds(thresholds);
  MMAReport r;
  r.thresholds = thresholds;
  r.correct.assign(thresholds.size(), 0);
  r.fractions.assign(thresholds.size(), 0.0);
  r.num_matches = matches.size();
  r.no_matches = matches.empty();
  for (const Match& m : matches) {
    if (m.a >= a.size() || m.b >= b.size()) throw ShapeError("match index out of range");
    const Keypoint& ka = a.keypoints[m.a];
    const Keypoint& kb = b.keypoints[m.b];
    const auto p = h.try_apply({ka.x, ka.y});
    if (!p) continue;
    const double err = std::hypot(p->x - kb.x, p->y - kb.y);
    for (std::size_t t = 0; t < thresholds.size(); ++t) r.correct[t] += err <= thresholds[t];
  }
  if (!r.no_matches) {
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      r.fractions[t] = static_cast<double>(r.correct[t]) / static_cast<double>(r.num_matches);
    }
  }
  for (std::size_t t = 1; t < r.fractions.size(); ++t) {
    if (r.fractions[t] < r.fractions[t - 1]) throw NumericError("MMA decreased with threshold");
  }
  return r;
}

SequenceEvaluation evaluate_sequence(const Network& net, const ImageSequence& seq,
                                     const EvalOptions& opts) {
  check_thresholds(opts.thresholds);
  if (seq.images.size() < 2) throw DataError("sequence needs at least two images");
  auto extract_image = [&](const Image& img) {
    const auto scales = opts.scales.empty() ? default_scales(img.height, img.width) : opts.scales;
    return extract_multiscale(net, img, scales, opts.extract);
  };
  SequenceEvaluation eval;
  eval.options = opts;
  auto start = Clock::now();
  const KeypointSet ref = extract_image(seq.images[0]);
  eval.extract_seconds += seconds_since(start);
  eval.mean_fractions.assign(opts.thresholds.size(), 0.0);
  for (std::size_t k = 1; k < seq.images.size(); ++k) {
    start = Clock::now();
    const KeypointSet target = extract_image(seq.images[k]);
    eval.extract_seconds += seconds_since(start);
    PairEvaluation pe;
    pe.target = k + 1;
    pe.keypoints_a = ref.size();
    pe.keypoints_b = target.size();
    start = Clock::now();
    const MatchSet matches = match(ref, target, opts.policy);
    pe.match_seconds = seconds_since(start);
    pe.report = mma(matches, ref, target, seq.homographies[k - 1], opts.thresholds);
    for (std::size_t t = 0; t < opts.thresholds.size(); ++t) {
      eval.mean_fractions[t] += pe.report.fractions[t];
    }
    eval.pairs.push_back(std::move(pe));
  }
  for (double& f : eval.mean_fractions) f /= static_cast<double>(eval.pairs.size());
  return eval;
}

void write_mma_report(const std::filesystem::path& path, const SequenceEvaluation& eval) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report '" + path.string() + "'");
  const auto& o = eval.options;
  char buf[256];
  out << "# mean matching accuracy\n";
  std::snprintf(buf, sizeof buf, "# policy %s rel_thresh %.6g rep_thresh %.6g topk %zu nms_radius %d\n",
                to_string(o.policy).c_str(), o.extract.rel_thresh, o.extract.rep_thresh,
                o.extract.topk, o.extract.nms_radius);
  out << buf << "# scales " << scales_string(o.scales) << "\n";
  std::snprintf(buf, sizeof buf, "# extract_seconds %.6f\n", eval.extract_seconds);
  out << buf;
  for (const auto& p : eval.pairs) {
    std::snprintf(buf, sizeof buf,
                  "# pair 1-%zu keypoints %zu %zu matches %zu%s match_seconds %.6f\n", p.target,
                  p.keypoints_a, p.keypoints_b, p.report.num_matches,
                  p.report.no_matches ? " (no matches)" : "", p.match_seconds);
    out << buf;
  }
  for (std::size_t t = 0; t < o.thresholds.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%g\t%.6f\n", o.thresholds[t], eval.mean_fractions[t]);
    out << buf;
  }
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

void write_mma_plot(const std::filesystem::path& path, const std::vector<MMACurve>& curves,
                    int width, int height) {
  if (width < 64 || height < 64) throw ConfigError("plot too small");
  static const unsigned char palette[][3] = {{214, 39, 40},  {31, 119, 180}, {44, 160, 44},
                                             {255, 127, 14}, {148, 103, 189}, {140, 86, 75}};
  const unsigned char axis[3] = {0, 0, 0};
  const unsigned char grid[3] = {220, 220, 220};
  Canvas c(width, height);
  const int left = 40, right = width - 16, top = 16, bottom = height - 32;
  double t_max = 1.0;
  for (const auto& cv : curves) {
    if (!cv.thresholds.empty()) t_max = std::max(t_max, cv.thresholds.back());
  }
  auto px = [&](double t) { return left + static_cast<int>(std::lround((right - left) * t / t_max)); };
  auto py = [&](double f) { return bottom - static_cast<int>(std::lround((bottom - top) * f)); };
  for (int i = 0; i <= 10; ++i) c.line(left, py(i / 10.0), right, py(i / 10.0), grid);
  for (int t = 1; t <= static_cast<int>(t_max); ++t) c.line(px(t), top, px(t), bottom, grid);
  c.line(left, bottom, right, bottom, axis);
  c.line(left, top, left, bottom, axis);
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& cv = curves[k];
    const unsigned char* col = palette[k % 6];
    for (std::size_t i = 1; i < cv.thresholds.size(); ++i) {
      c.line(px(cv.thresholds[i - 1]), py(cv.fractions[i - 1]), px(cv.thresholds[i]),
             py(cv.fractions[i]), col, 2);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write plot '" + path.string() + "'");
  out << "P6\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(c.rgb.data()), static_cast<std::streamsize>(c.rgb.size()));
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

BenchStats bench_match(const KeypointSet& a, const KeypointSet& b, std::size_t repeats,
                       MatchPolicy policy, const MatchOptions& opts) {
  if (repeats < 3) throw ConfigError("bench needs at least 3 repeats");
  BenchStats s;
  s.threads = std::max(1u, opts.threads);
  if (a.empty() || b.empty()) return s;
  s.count_a = a.size();
  s.count_b = b.size();
  s.dim = a.dim;
  s.matches = match(a, b, policy, opts).size();
  s.warmup_runs = 1;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    const MatchSet m = match(a, b, policy, opts);
    s.samples.push_back(seconds_since(start));
    if (m.size() != s.matches) throw NumericError("matching is not deterministic");
  }
  std::vector<double> sorted = s.samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median_seconds = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.min_seconds = sorted.front();
  return s;
}

}  // namespace sfeat
