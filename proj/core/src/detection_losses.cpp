#include "sfeat/detection_losses.hpp"

#include <cmath>

namespace sfeat {

using ad::Graph;
using ad::SamplePoint;
using ad::Shape;
using ad::Tensor;
using ad::Var;

void RepeatabilityConfig::validate() const {
  if (patch_size < 2) throw ConfigError("patch_size must be >= 2");
  if (peaky_weight < 0.0) throw ConfigError("peaky_weight must be >= 0");
}

void ReliabilityConfig::validate() const {
  if (sample_radius < 1.0) throw ConfigError("sample_radius must be >= 1");
  if (num_negatives < 1) throw ConfigError("num_negatives must be >= 1");
  if (kappa < 0.0 || kappa > 1.0) throw ConfigError("kappa must be in [0,1]");
  if (num_bins < 2) throw ConfigError("num_bins must be >= 2");
  if (anchor_stride < 1) throw ConfigError("anchor_stride must be >= 1");
}

WarpedMap warp_repeatability(Var r_prime, const CorrespondenceMap& t) {
  const Shape& s = r_prime.shape();
  if (s.size() != 3 || s[0] != 1) {
    throw ShapeError("warp_repeatability expects [1,H,W], got " + ad::shape_string(s));
  }
  std::vector<SamplePoint> points(t.height * t.width, SamplePoint{-1.0, -1.0});
  Tensor valid(Shape{1, t.height, t.width}, 0.0);
  const double max_x = static_cast<double>(s[2]) - 1.0;
  const double max_y = static_cast<double>(s[1]) - 1.0;
  for (std::size_t i = 0; i < t.height; ++i) {
    for (std::size_t j = 0; j < t.width; ++j) {
      if (!t.is_valid(i, j)) continue;
      const Point2 q = t.target(i, j);
      if (q.x < 0.0 || q.y < 0.0 || q.x > max_x || q.y > max_y) continue;
      points[i * t.width + j] = SamplePoint{q.x, q.y};
      valid[i * t.width + j] = 1.0;
    }
  }
  Var sampled = ad::sample_bilinear(r_prime, points);
  return WarpedMap{ad::reshape(sampled, Shape{1, t.height, t.width}), std::move(valid)};
}

RepeatabilityLoss repeatability_loss(Var r, Var r_warped, const Tensor& valid,
                                     const RepeatabilityConfig& cfg) {
  cfg.validate();
  if (r.shape() != r_warped.shape() || r.shape() != valid.shape) {
    throw ShapeError("repeatability_loss: shapes " + ad::shape_string(r.shape()) + ", " +
                     ad::shape_string(r_warped.shape()) + ", mask " + ad::shape_string(valid.shape));
  }
  if (r.shape().size() != 3 || r.shape()[0] != 1) throw ShapeError("repeatability maps must be [1,H,W]");
  Graph& g = r.graph();
  const std::size_t n = cfg.patch_size;
  const std::size_t h = r.shape()[1];
  const std::size_t w = r.shape()[2];
  const std::size_t nx = w / n;
  const std::size_t np = (h / n) * nx;

  std::vector<std::size_t> counts(np, 0);
  for (std::size_t p = 0; p < np; ++p) {
    const std::size_t py = p / nx, px = p % nx;
    for (std::size_t dy = 0; dy < n; ++dy) {
      for (std::size_t dx = 0; dx < n; ++dx) counts[p] += valid[(py * n + dy) * w + px * n + dx] != 0.0;
    }
  }
  Tensor any_valid(Shape{np}, 0.0);
  Tensor full_valid(Shape{np}, 0.0);
  std::size_t n_any = 0, n_full = 0;
  for (std::size_t p = 0; p < np; ++p) {
    if (counts[p] > 0) any_valid[p] = 1.0, ++n_any;
    if (counts[p] == n * n) full_valid[p] = 1.0, ++n_full;
  }

  RepeatabilityLoss out;
  if (n_any == 0) {
    out.empty_support = true;
    out.total = out.cosim = out.peaky = g.constant(Tensor::scalar(0.0));
    return out;
  }

  const Var mask = g.constant(valid);
  const Var a = ad::l2_normalize(ad::transpose(ad::extract_patches(ad::multiply(r, mask), n)));
  const Var b = ad::l2_normalize(ad::transpose(ad::extract_patches(ad::multiply(r_warped, mask), n)));
  const Var cos = ad::sum(ad::multiply(a, b), {0});
  const Var mean_cos = ad::scale(ad::sum(ad::multiply(cos, g.constant(any_valid))),
                                 1.0 / static_cast<double>(n_any));
  out.cosim = ad::shift(ad::scale(mean_cos, -1.0), 1.0);

  auto peakiness = [n](Var map) {
    const Var patches = ad::extract_patches(map, n);
    return ad::subtract(ad::max(patches, {1}), ad::mean(patches, {1}));
  };
  const Var peak_r = ad::mean(peakiness(r));
  Var peak_mean = peak_r;
  if (n_full > 0) {
    const Var peak_t = ad::scale(ad::sum(ad::multiply(peakiness(r_warped), g.constant(full_valid))),
                                 1.0 / static_cast<double>(n_full));
    peak_mean = ad::scale(ad::add(peak_r, peak_t), 0.5);
  }
  out.peaky = ad::shift(ad::scale(peak_mean, -1.0), 1.0);
  out.total = ad::add(out.cosim, ad::scale(out.peaky, cfg.peaky_weight));
  return out;
}

Var binned_ap(Var d_pos, Var d_neg, std::size_t num_bins, double max_distance) {
  const Shape& sp = d_pos.shape();
  const Shape& sn = d_neg.shape();
  if (sp.size() != 1 || sn.size() != 2 || sn[0] != sp[0]) {
    throw ShapeError("binned_ap: expected [A] and [A,K], got " + ad::shape_string(sp) + " and " +
                     ad::shape_string(sn));
  }
  if (num_bins < 2 || !(max_distance > 0.0)) throw ConfigError("binned_ap: bad binning");
  const std::size_t na = sp[0];
  const std::size_t nk = sn[1];
  const std::size_t q = num_bins;
  const double delta = max_distance / static_cast<double>(q - 1);

  // Two bins touch each distance: floor(d/delta) and the next one.
  auto assign = [q, delta](double d, std::size_t& lo, double& w_lo, double& w_hi) {
    const double t = d / delta;
    if (t < 0.0 || t > static_cast<double>(q - 1)) {
      lo = q;
      return;
    }
    lo = std::min(static_cast<std::size_t>(std::floor(t)), q - 1);
    w_hi = t - static_cast<double>(lo);
    w_lo = 1.0 - w_hi;
  };

  const Tensor& dp = d_pos.value();
  const Tensor& dn = d_neg.value();
  Tensor out(Shape{na}, 0.0);
  // Per-anchor cumulative negative mass per bin, kept for backward.
  std::vector<double> cum(na * q, 0.0);
  for (std::size_t a = 0; a < na; ++a) {
    double* c = cum.data() + a * q;
    for (std::size_t k = 0; k < nk; ++k) {
      std::size_t lo;
      double wl = 0, wh = 0;
      assign(dn[a * nk + k], lo, wl, wh);
      if (lo >= q) continue;
      c[lo] += wl;
      if (lo + 1 < q) c[lo + 1] += wh;
    }
    for (std::size_t b = 1; b < q; ++b) c[b] += c[b - 1];
    std::size_t lo;
    double wl = 0, wh = 0;
    assign(dp[a], lo, wl, wh);
    if (lo >= q) continue;
    double ap = wl / (1.0 + c[lo]);
    if (lo + 1 < q) ap += wh / (1.0 + c[lo + 1]);
    out[a] = ap;
  }

  return d_pos.graph().record(
      std::move(out), {d_pos, d_neg},
      [d_pos, d_neg, na, nk, q, delta, assign, cum = std::move(cum)](Graph& g, const Tensor& gout,
                                                                     const Tensor&) {
        const Tensor& dp = g.value(d_pos.id());
        const Tensor& dn = g.value(d_neg.id());
        Tensor* gp = g.requires_grad(d_pos.id()) ? &g.grad_buffer(d_pos.id()) : nullptr;
        Tensor* gn = g.requires_grad(d_neg.id()) ? &g.grad_buffer(d_neg.id()) : nullptr;
        std::vector<double> dcum(q);
        for (std::size_t a = 0; a < na; ++a) {
          const double* c = cum.data() + a * q;
          std::size_t lo;
          double wl = 0, wh = 0;
          assign(dp[a], lo, wl, wh);
          if (lo >= q) continue;
          const double t = dp[a] / delta;
          const bool on_center = t == static_cast<double>(lo);
          const double up = lo + 1 < q ? 1.0 / (1.0 + c[lo + 1]) : 0.0;
          if (gp && !on_center) {
            // d(ap)/dd for the positive: weight moves from bin lo to lo+1.
            (*gp)[a] += gout[a] * (up - 1.0 / (1.0 + c[lo])) / delta;
          }
          if (!gn) continue;
          // d(ap)/d(cum_k) = -q_k(d+) / (1 + cum_k)^2, nonzero for two bins.
          std::fill(dcum.begin(), dcum.end(), 0.0);
          dcum[lo] = -wl / ((1.0 + c[lo]) * (1.0 + c[lo]));
          if (lo + 1 < q) dcum[lo + 1] = -wh / ((1.0 + c[lo + 1]) * (1.0 + c[lo + 1]));
          // Mass in bin j contributes to every cum_k with k >= j.
          for (std::size_t b = q - 1; b-- > 0;) dcum[b] += dcum[b + 1];
          for (std::size_t k = 0; k < nk; ++k) {
            std::size_t nlo;
            double nwl = 0, nwh = 0;
            const double d = dn[a * nk + k];
            assign(d, nlo, nwl, nwh);
            if (nlo >= q || d / delta == static_cast<double>(nlo)) continue;
            const double dhi = nlo + 1 < q ? dcum[nlo + 1] : 0.0;
            (*gn)[a * nk + k] += gout[a] * (dhi - dcum[nlo]) / delta;
          }
        }
      });
}

ReliabilitySamples sample_reliability_points(const CorrespondenceMap& t, std::size_t target_height,
                                             std::size_t target_width, const ReliabilityConfig& cfg,
                                             std::mt19937_64& rng) {
  cfg.validate();
  ReliabilitySamples s;
  s.negatives_per_anchor = cfg.num_negatives;
  const std::size_t start = cfg.anchor_stride / 2;
  for (std::size_t i = start; i < t.height; i += cfg.anchor_stride) {
    for (std::size_t j = start; j < t.width; j += cfg.anchor_stride) {
      if (!t.is_valid(i, j)) continue;
      const Point2 q = t.target(i, j);
      if (q.x > static_cast<double>(target_width) - 1.0 || q.y > static_cast<double>(target_height) - 1.0) {
        continue;
      }
      s.anchors.push_back({static_cast<double>(j), static_cast<double>(i)});
      s.positives.push_back({q.x, q.y});
    }
  }
  if (s.anchors.empty()) throw EmptySupervisionError("no anchor has a valid correspondence");

  const double r2 = cfg.sample_radius * cfg.sample_radius;
  std::uniform_int_distribution<std::size_t> ux(0, target_width - 1);
  std::uniform_int_distribution<std::size_t> uy(0, target_height - 1);
  s.negatives.reserve(s.anchors.size() * cfg.num_negatives);
  for (const SamplePoint& pos : s.positives) {
    for (std::size_t k = 0; k < cfg.num_negatives; ++k) {
      bool found = false;
      for (int attempt = 0; attempt < 1000 && !found; ++attempt) {
        const double x = static_cast<double>(ux(rng));
        const double y = static_cast<double>(uy(rng));
        if ((x - pos.x) * (x - pos.x) + (y - pos.y) * (y - pos.y) > r2) {
          s.negatives.push_back({x, y});
          found = true;
        }
      }
      if (!found) throw ConfigError("sample_radius leaves no room for negatives");
    }
  }
  return s;
}

ReliabilityLoss reliability_loss(Var x1, Var x2, Var s1, const ReliabilitySamples& samples,
                                 const ReliabilityConfig& cfg) {
  cfg.validate();
  const std::size_t na = samples.anchors.size();
  const std::size_t nk = samples.negatives_per_anchor;
  if (na == 0) throw EmptySupervisionError("reliability loss without anchors");
  if (samples.positives.size() != na || samples.negatives.size() != na * nk || nk == 0) {
    throw ShapeError("reliability samples are inconsistent");
  }
  if (x1.shape().size() != 3 || x1.shape()[0] != x2.shape()[0]) {
    throw ShapeError("reliability_loss: descriptor maps disagree: " + ad::shape_string(x1.shape()) +
                     " vs " + ad::shape_string(x2.shape()));
  }
  const Var anchors = ad::sample_bilinear(x1, samples.anchors);
  const Var positives = ad::l2_normalize(ad::sample_bilinear(x2, samples.positives));
  const Var negatives = ad::sample_bilinear(x2, samples.negatives);

  std::vector<std::pair<std::size_t, std::size_t>> pos_pairs(na), neg_pairs(na * nk);
  for (std::size_t a = 0; a < na; ++a) {
    pos_pairs[a] = {a, a};
    for (std::size_t k = 0; k < nk; ++k) neg_pairs[a * nk + k] = {a, a * nk + k};
  }
  const Var d_pos = ad::column_distance(anchors, positives, pos_pairs);
  const Var d_neg = ad::reshape(ad::column_distance(anchors, negatives, neg_pairs), Shape{na, nk});
  const Var ap = binned_ap(d_pos, d_neg, cfg.num_bins);

  const Var score = ad::reshape(ad::sample_bilinear(s1, samples.anchors), Shape{na});
  // 1 - (ap * s + kappa * (1 - s)) = (1 - kappa) - s * (ap - kappa)
  const Var weighted = ad::multiply(score, ad::shift(ap, -cfg.kappa));
  const Var per_anchor = ad::shift(ad::scale(weighted, -1.0), 1.0 - cfg.kappa);
  return ReliabilityLoss{ad::mean(per_anchor), ap};
}

ReliabilityLoss reliability_loss(Var x1, Var x2, Var s1, const CorrespondenceMap& t,
                                 const ReliabilityConfig& cfg, std::mt19937_64& rng) {
  if (x2.shape().size() != 3) throw ShapeError("reliability_loss expects [D,H,W] maps");
  const ReliabilitySamples samples =
      sample_reliability_points(t, x2.shape()[1], x2.shape()[2], cfg, rng);
  return reliability_loss(x1, x2, s1, samples, cfg);
}

}  // namespace sfeat
