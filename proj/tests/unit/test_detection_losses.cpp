#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sfeat/detection_losses.hpp"
#include "sfeat/error.hpp"

using namespace sfeat;
using ad::Graph;
using ad::Var;
using ad::Tensor;

namespace {

CorrespondenceMap identity_map(std::size_t h, std::size_t w) {
  return build_correspondence_map(Homography(), h, w, h, w);
}

// One-hot patches: a single 1 per 16x16 tile at a position that varies.
Tensor one_hot_map(std::size_t h, std::size_t w, std::size_t n) {
  Tensor t({1, h, w});
  for (std::size_t py = 0; py < h / n; ++py)
    for (std::size_t px = 0; px < w / n; ++px) t[(py * n + (py + px) % n) * w + px * n + (px * 3) % n] = 1.0;
  return t;
}

}  // namespace

TEST(Warp, IdentityIsExact) {
  std::mt19937_64 rng(1);
  const Tensor r = oracle::random_tensor({1, 20, 24}, rng, 0.0, 1.0);
  Graph g;
  const WarpedMap w = warp_repeatability(g.leaf(r), identity_map(20, 24));
  EXPECT_EQ(w.map.value().data, r.data);
  for (double v : w.valid.data) EXPECT_EQ(v, 1.0);
}

TEST(Warp, IntegerTranslation) {
  std::mt19937_64 rng(2);
  const Tensor r = oracle::random_tensor({1, 16, 20}, rng, 0.0, 1.0);
  const auto t = build_correspondence_map(Homography::translation(5, 0), 16, 20, 16, 20);
  Graph g;
  const WarpedMap w = warp_repeatability(g.leaf(r), t);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 20; ++j) {
      if (j + 5 < 20) {
        EXPECT_EQ(w.valid[i * 20 + j], 1.0);
        EXPECT_EQ(w.map.value()[i * 20 + j], r[i * 20 + j + 5]);
      } else {
        EXPECT_EQ(w.valid[i * 20 + j], 0.0);
        EXPECT_EQ(w.map.value()[i * 20 + j], 0.0);
      }
    }
}

TEST(Repeatability, OneHotPatches) {
  const Tensor r = one_hot_map(32, 32, 16);
  Graph g;
  Var v = g.leaf(r);
  const auto loss = repeatability_loss(v, v, Tensor({1, 32, 32}, 1.0), RepeatabilityConfig{});
  EXPECT_NEAR(loss.cosim.value().item(), 0.0, 1e-12);
  EXPECT_NEAR(loss.peaky.value().item(), 1.0 / 256.0, 1e-12);
  EXPECT_FALSE(loss.empty_support);
}

TEST(Repeatability, ConstantMapsAreTheDegenerateTrap) {
  Graph g;
  Var v = g.leaf(Tensor({1, 32, 32}, 0.4));
  const auto loss = repeatability_loss(v, v, Tensor({1, 32, 32}, 1.0), RepeatabilityConfig{});
  EXPECT_NEAR(loss.cosim.value().item(), 0.0, 1e-12);
  EXPECT_NEAR(loss.peaky.value().item(), 1.0, 1e-12);
}

TEST(Repeatability, OrthogonalSupports) {
  Tensor a({1, 16, 16}), b({1, 16, 16});
  for (std::size_t i = 0; i < 256; ++i) (i % 2 ? a : b)[i] = 1.0;
  Graph g;
  const auto loss = repeatability_loss(g.leaf(a), g.leaf(b), Tensor({1, 16, 16}, 1.0), RepeatabilityConfig{});
  EXPECT_NEAR(loss.cosim.value().item(), 1.0, 1e-12);
}

TEST(Repeatability, EmptySupportIsZeroAndFlagged) {
  std::mt19937_64 rng(3);
  const Tensor r = oracle::random_tensor({1, 32, 32}, rng, 0.0, 1.0);
  const auto t = build_correspondence_map(Homography::translation(100, 0), 32, 32, 32, 32);
  EXPECT_EQ(t.valid_count(), 0u);
  Graph g;
  Var v = g.leaf(r);
  const WarpedMap w = warp_repeatability(v, t);
  const auto loss = repeatability_loss(v, w.map, w.valid, RepeatabilityConfig{});
  EXPECT_TRUE(loss.empty_support);
  EXPECT_EQ(loss.total.value().item(), 0.0);
}

TEST(Repeatability, PeakyWeightScalesPeakiness) {
  std::mt19937_64 rng(4);
  const Tensor a = oracle::random_tensor({1, 32, 32}, rng, 0.0, 1.0);
  const Tensor b = oracle::random_tensor({1, 32, 32}, rng, 0.0, 1.0);
  RepeatabilityConfig cfg;
  cfg.peaky_weight = 0.25;
  Graph g;
  const auto l = repeatability_loss(g.leaf(a), g.leaf(b), Tensor({1, 32, 32}, 1.0), cfg);
  EXPECT_NEAR(l.total.value().item(), l.cosim.value().item() + 0.25 * l.peaky.value().item(), 1e-14);
  cfg.patch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(BinnedAp, PerfectRankingGivesOne) {
  Graph g;
  const Tensor ap = binned_ap(g.leaf(Tensor({1}, {0.0})), g.leaf(Tensor({1, 3}, {1.5, 1.8, 2.0})), 25).value();
  EXPECT_NEAR(ap[0], 1.0, 1e-12);
}

TEST(BinnedAp, MonotoneInPositiveDistance) {
  std::mt19937_64 rng(5);
  const Tensor neg = oracle::random_tensor({1, 16}, rng, 0.0, 2.0);
  double prev = 2.0;
  for (int k = 0; k <= 40; ++k) {
    Graph g;
    const double ap = binned_ap(g.leaf(Tensor({1}, {k * 0.05})), g.leaf(neg), 25).value()[0];
    ASSERT_GE(ap, 0.0);
    ASSERT_LE(ap, 1.0);
    ASSERT_LE(ap, prev + 1e-12);
    prev = ap;
  }
}

TEST(BinnedAp, RejectsBadShapes) {
  Graph g;
  EXPECT_THROW(binned_ap(g.leaf(Tensor({2})), g.leaf(Tensor({3, 4})), 25), ShapeError);
}

namespace {

// Two-pixel descriptor maps with one anchor and one negative per anchor.
struct TinyReliability {
  Tensor x1{{2, 1, 1}, {1.0, 0.0}};
  Tensor x2{{2, 1, 2}, {1.0, 0.0, 0.0, 1.0}};
  ReliabilitySamples samples{{{0, 0}}, {{0, 0}}, {{1, 0}}, 1};
};

}  // namespace

TEST(Reliability, PerfectApAndFullConfidenceGivesZero) {
  TinyReliability t;
  Graph g;
  const auto l = reliability_loss(g.leaf(t.x1), g.leaf(t.x2), g.leaf(Tensor({1, 1, 1}, 1.0)), t.samples,
                                  ReliabilityConfig{});
  EXPECT_NEAR(l.ap.value()[0], 1.0, 1e-9);
  EXPECT_NEAR(l.loss.value().item(), 0.0, 1e-9);
}

TEST(Reliability, ZeroConfidenceGivesOneMinusKappa) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x1 = oracle::random_tensor({4, 16, 16}, rng), x2 = oracle::random_tensor({4, 16, 16}, rng);
    Graph g;
    Var d1 = ad::l2_normalize(g.leaf(x1)), d2 = ad::l2_normalize(g.leaf(x2));
    ReliabilityConfig cfg;
    cfg.num_negatives = 8;
    cfg.sample_radius = 3;
    const auto l = reliability_loss(d1, d2, g.leaf(Tensor({1, 16, 16}, 0.0)), identity_map(16, 16), cfg, rng);
    EXPECT_NEAR(l.loss.value().item(), 1.0 - cfg.kappa, 1e-12);
  }
}

TEST(Reliability, IndifferentToConfidenceAtKappa) {
  // Setting kappa to the anchor's own AP makes d loss / d S vanish.
  TinyReliability t;
  t.x2 = Tensor({2, 1, 2}, {0.6, 0.8, 0.8, 0.6});  // negative closer than the positive
  ReliabilityConfig cfg;
  Graph g;
  cfg.kappa = reliability_loss(g.leaf(t.x1), g.leaf(t.x2), g.leaf(Tensor({1, 1, 1}, 0.3)), t.samples, cfg)
                  .ap.value()[0];
  ASSERT_GT(cfg.kappa, 0.0);
  ASSERT_LT(cfg.kappa, 1.0);
  Graph g2;
  Var conf = g2.leaf(Tensor({1, 1, 1}, 0.3));
  g2.backward(reliability_loss(g2.leaf(t.x1), g2.leaf(t.x2), conf, t.samples, cfg).loss);
  EXPECT_NEAR(conf.grad()[0], 0.0, 1e-12);
}

TEST(Reliability, EmptySupervisionThrows) {
  std::mt19937_64 rng(7);
  const auto t = build_correspondence_map(Homography::translation(500, 0), 16, 16, 16, 16);
  Graph g;
  Var x = g.leaf(Tensor({2, 16, 16}, 0.5));
  EXPECT_THROW(reliability_loss(x, x, g.leaf(Tensor({1, 16, 16}, 0.5)), t, ReliabilityConfig{}, rng),
               EmptySupervisionError);
}

TEST(Reliability, SamplesRespectRadiusAndGrid) {
  std::mt19937_64 rng(8);
  const auto t = build_correspondence_map(Homography::translation(2.5, -1.5), 32, 32, 32, 32);
  ReliabilityConfig cfg;
  const auto s = sample_reliability_points(t, 32, 32, cfg, rng);
  ASSERT_FALSE(s.anchors.empty());
  ASSERT_EQ(s.negatives.size(), s.anchors.size() * cfg.num_negatives);
  for (std::size_t a = 0; a < s.anchors.size(); ++a) {
    EXPECT_EQ(static_cast<std::size_t>(s.anchors[a].x) % cfg.anchor_stride, cfg.anchor_stride / 2);
    EXPECT_NEAR(s.positives[a].x, s.anchors[a].x + 2.5, 1e-9);
    for (std::size_t k = 0; k < cfg.num_negatives; ++k) {
      const auto& n = s.negatives[a * cfg.num_negatives + k];
      EXPECT_GT(std::hypot(n.x - s.positives[a].x, n.y - s.positives[a].y), cfg.sample_radius);
      EXPECT_EQ(n.x, std::floor(n.x));
    }
  }
}

TEST(Reliability, ConfigValidation) {
  ReliabilityConfig cfg;
  cfg.kappa = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.num_bins = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
