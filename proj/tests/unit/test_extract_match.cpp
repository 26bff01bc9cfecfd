#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "oracles.hpp"
#include "sfeat/descriptor_io.hpp"
#include "sfeat/error.hpp"
#include "sfeat/extract.hpp"
#include "sfeat/match.hpp"
#include "sfeat/mma.hpp"
#include "sfeat/synthetic.hpp"
#include "temp_dir.hpp"

using namespace sfeat;
using ad::Tensor;

namespace {

FeatureMaps random_maps(std::size_t d, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  FeatureMaps m;
  m.descriptors = oracle::random_tensor({d, h, w}, rng);
  for (std::size_t p = 0; p < h * w; ++p) {
    double n = 0.0;
    for (std::size_t c = 0; c < d; ++c) n += m.descriptors[c * h * w + p] * m.descriptors[c * h * w + p];
    for (std::size_t c = 0; c < d; ++c) m.descriptors[c * h * w + p] /= std::sqrt(n);
  }
  m.reliability = oracle::random_tensor({1, h, w}, rng, 0.0, 1.0);
  m.repeatability = oracle::random_tensor({1, h, w}, rng, 0.0, 1.0);
  // Quantize a few values so ties appear.
  std::bernoulli_distribution tie(0.2);
  for (double& v : m.repeatability.data)
    if (tie(rng)) v = std::round(v * 4.0) / 4.0;
  return m;
}

KeypointSet random_set(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  KeypointSet s;
  s.dim = dim;
  std::uniform_real_distribution<float> pos(0.0f, 64.0f);
  std::normal_distribution<float> g;
  for (std::size_t i = 0; i < n; ++i) {
    s.keypoints.push_back({pos(rng), pos(rng), 1.0f, 1.0f});
    float norm = 0.0f;
    std::vector<float> row(dim);
    for (auto& v : row) {
      v = g(rng);
      norm += v * v;
    }
    for (auto v : row) s.descriptors.push_back(v / std::sqrt(norm));
  }
  return s;
}

FeatureMaps spike_maps(std::size_t h, std::size_t w, std::size_t y, std::size_t x) {
  FeatureMaps m;
  m.descriptors = Tensor({2, h, w}, 0.0);
  for (std::size_t p = 0; p < h * w; ++p) m.descriptors[p] = 1.0;
  m.reliability = Tensor({1, h, w}, 1.0);
  m.repeatability = Tensor({1, h, w}, 0.0);
  m.repeatability[y * w + x] = 0.9;
  return m;
}

void expect_same(const KeypointSet& got, const KeypointSet& want) {
  ASSERT_EQ(got.size(), want.size());
  ASSERT_EQ(got.dim, want.dim);
  for (std::size_t i = 0; i < got.size(); ++i) {
    ASSERT_EQ(got.keypoints[i].x, want.keypoints[i].x);
    ASSERT_EQ(got.keypoints[i].y, want.keypoints[i].y);
    ASSERT_NEAR(got.keypoints[i].score, want.keypoints[i].score, 1e-6);
  }
  for (std::size_t k = 0; k < got.descriptors.size(); ++k)
    ASSERT_NEAR(got.descriptors[k], want.descriptors[k], 1e-6);
}

}  // namespace

TEST(Extract, MatchesOracle) {
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> size(8, 24);
    const FeatureMaps maps = random_maps(4, size(rng), size(rng), rng);
    ExtractConfig cfg;
    cfg.nms_radius = 1 + seed % 4;
    cfg.rel_thresh = 0.1 * (seed % 5);
    cfg.rep_thresh = 0.1 * (seed % 7);
    cfg.topk = seed % 3 == 0 ? 5 : 5000;
    expect_same(extract(maps, cfg), oracle::extract(maps, cfg));
  }
}

TEST(Extract, SingleSpike) {
  const KeypointSet s = extract(spike_maps(20, 20, 7, 11), ExtractConfig{});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.keypoints[0].x, 11.0f);
  EXPECT_EQ(s.keypoints[0].y, 7.0f);
  EXPECT_NEAR(s.keypoints[0].score, 0.9f, 1e-6);
  EXPECT_EQ(s.row(0)[0], 1.0f);
}

TEST(Extract, ConstantRepeatabilityHasNoMaxima) {
  FeatureMaps m = spike_maps(16, 16, 0, 0);
  m.repeatability = Tensor({1, 16, 16}, 0.9);
  EXPECT_TRUE(extract(m, ExtractConfig{}).empty());
}

TEST(Extract, RejectsBadConfig) {
  ExtractConfig cfg;
  cfg.nms_radius = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.topk = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Extract, RandomKeypointsAreDistinctPixels) {
  std::mt19937_64 rng(3);
  const FeatureMaps m = random_maps(3, 10, 10, rng);
  const KeypointSet s = random_keypoints(m, 40, rng);
  ASSERT_EQ(s.size(), 40u);
  std::set<std::pair<float, float>> seen;
  for (const auto& k : s.keypoints) {
    EXPECT_TRUE(seen.insert({k.x, k.y}).second);
    EXPECT_EQ(k.score, 0.0f);
    const auto p = static_cast<std::size_t>(k.y) * 10 + static_cast<std::size_t>(k.x);
    EXPECT_NEAR(s.row(&k - s.keypoints.data())[1], m.descriptors[100 + p], 1e-7);
  }
  EXPECT_EQ(random_keypoints(m, 500, rng).size(), 100u);
}

TEST(Multiscale, SingleScaleEqualsExtract) {
  const Network net = Network::build(BackboneConfig::desk(), 2);
  const Image img = generate_scene(40, 48, 5);
  ExtractConfig cfg;
  cfg.rel_thresh = 0.0;
  cfg.rep_thresh = 0.0;
  const KeypointSet single = extract(net.forward(to_tensor(img)), cfg);
  const KeypointSet multi = extract_multiscale(net, img, {1.0}, cfg);
  ASSERT_FALSE(single.empty());
  expect_same(multi, single);
}

TEST(Multiscale, CoordinatesMapToOriginalFrame) {
  // The fake detector spikes at the centre of any image narrower than 40 px.
  const Detector det = [](const Tensor& img) {
    const std::size_t h = img.shape[1], w = img.shape[2];
    FeatureMaps m = spike_maps(h, w, h / 2, w / 2);
    if (w >= 40) m.repeatability = Tensor({1, h, w}, 0.0);
    return m;
  };
  Image img(3, 64, 64, 0.5);
  const KeypointSet s = extract_multiscale(det, img, {1.0, 0.5}, ExtractConfig{});
  ASSERT_EQ(s.size(), 1u);
  // Pixel (16, 16) of the 32 px image has centre 16.5 * 2 - 0.5 in the original.
  EXPECT_NEAR(s.keypoints[0].x, 32.5f, 1e-5);
  EXPECT_NEAR(s.keypoints[0].y, 32.5f, 1e-5);
  EXPECT_EQ(s.keypoints[0].scale, 0.5f);
}

TEST(Multiscale, CrossScaleDuplicatesKeepHigherScore) {
  // Both scales fire at the image centre; the half scale scores higher.
  const Detector det = [](const Tensor& img) {
    const std::size_t h = img.shape[1], w = img.shape[2];
    FeatureMaps m = spike_maps(h, w, h / 2, w / 2);
    m.repeatability[(h / 2) * w + w / 2] = w < 40 ? 0.95 : 0.8;
    return m;
  };
  Image img(3, 64, 64, 0.5);
  const KeypointSet s = extract_multiscale(det, img, {1.0, 0.5}, ExtractConfig{});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NEAR(s.keypoints[0].score, 0.95f, 1e-6);
}

TEST(Multiscale, RejectsBadScales) {
  const Network net = Network::build(BackboneConfig::desk(), 2);
  const Image img = generate_scene(40, 40, 5);
  EXPECT_THROW(extract_multiscale(net, img, {0.5, 1.0}, ExtractConfig{}), ConfigError);
  EXPECT_THROW(extract_multiscale(net, img, {1.0, 0.25}, ExtractConfig{}), ConfigError);
  const auto scales = default_scales(64, 128);
  ASSERT_FALSE(scales.empty());
  EXPECT_EQ(scales.front(), 1.0);
  EXPECT_GE(64 * scales.back(), 16.0);
}

TEST(Match, MatchesOracle) {
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> count(1, 50);
    const std::size_t dim = 1 + seed % 16;
    KeypointSet a = random_set(count(rng), dim, rng), b = random_set(count(rng), dim, rng);
    if (seed % 4 == 0) {
      // Duplicate rows produce exact distance ties.
      b = a;
      b.descriptors.insert(b.descriptors.end(), a.descriptors.begin(), a.descriptors.end());
      b.keypoints.insert(b.keypoints.end(), a.keypoints.begin(), a.keypoints.end());
    }
    for (MatchPolicy p : {MatchPolicy::kNearest, MatchPolicy::kMutual}) {
      const MatchSet got = match(a, b, p, {static_cast<unsigned>(1 + seed % 3)});
      const MatchSet want = oracle::match(a, b, p);
      ASSERT_EQ(got.size(), want.size()) << seed;
      for (std::size_t i = 0; i < got.size(); ++i) {
        ASSERT_EQ(got[i].a, want[i].a);
        ASSERT_EQ(got[i].b, want[i].b);
        ASSERT_NEAR(got[i].distance, want[i].distance, 1e-6);
      }
    }
  }
}

TEST(Match, Examples) {
  std::mt19937_64 rng(1);
  const KeypointSet a = random_set(30, 8, rng);
  const MatchSet self = match(a, a, MatchPolicy::kMutual);
  ASSERT_EQ(self.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(self[i].b, i);
  const KeypointSet one = random_set(1, 8, rng), other = random_set(1, 8, rng);
  EXPECT_EQ(match(one, other, MatchPolicy::kMutual).size(), 1u);
  EXPECT_TRUE(match(KeypointSet{{}, 8, {}}, a, MatchPolicy::kNearest).empty());
  EXPECT_THROW(match(a, random_set(3, 4, rng), MatchPolicy::kNearest), ShapeError);
  EXPECT_EQ(parse_match_policy("nn"), MatchPolicy::kNearest);
  EXPECT_EQ(to_string(parse_match_policy("mutual_nn")), "mutual_nn");
  EXPECT_THROW(parse_match_policy("ratio"), ConfigError);
}

TEST(Mma, MatchesOracle) {
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const KeypointSet a = random_set(40, 4, rng), b = random_set(40, 4, rng);
    const MatchSet m = match(a, b, MatchPolicy::kNearest);
    std::uniform_real_distribution<double> j(-4.0, 4.0);
    const std::array<Point2, 4> src{{{0, 0}, {63, 0}, {63, 63}, {0, 63}}};
    std::array<Point2, 4> dst = src;
    for (auto& p : dst) p = {p.x + j(rng), p.y + j(rng)};
    const Homography h = Homography::from_four_points(src, dst);
    const auto thresholds = default_mma_thresholds();
    const MMAReport got = mma(m, a, b, h, thresholds);
    const auto want = oracle::mma(m, a, b, h.row_major(), thresholds);
    for (std::size_t t = 0; t < thresholds.size(); ++t) ASSERT_NEAR(got.fractions[t], want[t], 1e-6);
  }
}

TEST(Mma, Examples) {
  KeypointSet a{{{0, 0, 1, 1}, {10, 0, 1, 1}, {20, 0, 1, 1}, {30, 0, 1, 1}}, 1, {1, 1, 1, 1}};
  KeypointSet b{{{1, 0, 1, 1}, {12, 0, 1, 1}, {25, 0, 1, 1}, {30, 10, 1, 1}}, 1, {1, 1, 1, 1}};
  const MatchSet m{{0, 0, 0}, {1, 1, 0}, {2, 2, 0}, {3, 3, 0}};
  const MMAReport r = mma(m, a, b, Homography());
  EXPECT_EQ(r.fractions[2], 0.5);  // t = 3
  EXPECT_EQ(r.fractions[0], 0.25);
  EXPECT_EQ(r.fractions[9], 1.0);
  const MMAReport self = mma(m, a, a, Homography());
  for (double f : self.fractions) EXPECT_EQ(f, 1.0);
  const MMAReport none = mma({}, a, b, Homography());
  EXPECT_TRUE(none.no_matches);
  for (double f : none.fractions) EXPECT_EQ(f, 0.0);
  EXPECT_ANY_THROW(mma(m, a, b, Homography(), {3.0, 1.0}));
}

TEST(Bench, ProtocolAndEmptySets) {
  std::mt19937_64 rng(2);
  const KeypointSet a = random_set(200, 16, rng), b = random_set(150, 16, rng);
  const BenchStats s = bench_match(a, b, 3);
  EXPECT_EQ(s.warmup_runs, 1u);
  EXPECT_EQ(s.samples.size(), 3u);
  EXPECT_LE(s.min_seconds, s.median_seconds);
  EXPECT_EQ(s.count_a, 200u);
  const BenchStats e = bench_match(KeypointSet{}, b, 3);
  EXPECT_EQ(e.count_a, 0u);
  EXPECT_EQ(e.median_seconds, 0.0);
  EXPECT_THROW(bench_match(a, b, 2), ConfigError);
}

TEST(DescriptorIo, RoundTripAndCorruption) {
  const auto dir = sfeat::testing::temp_dir("sfdk");
  std::mt19937_64 rng(4);
  const KeypointSet s = random_set(17, 9, rng);
  write_keypoints(dir / "k.sfdk", s);
  const KeypointSet back = read_keypoints(dir / "k.sfdk");
  EXPECT_EQ(back.dim, 9u);
  EXPECT_EQ(back.descriptors, s.descriptors);
  ASSERT_EQ(back.size(), 17u);
  EXPECT_EQ(back.keypoints[3].x, s.keypoints[3].x);
  std::filesystem::resize_file(dir / "k.sfdk", std::filesystem::file_size(dir / "k.sfdk") - 4);
  EXPECT_THROW(read_keypoints(dir / "k.sfdk"), DataError);
  std::ofstream(dir / "bad.sfdk") << "NOPE0000000000000";
  EXPECT_THROW(read_keypoints(dir / "bad.sfdk"), DataError);
}

TEST(Evaluate, SyntheticSequenceSelfConsistency) {
  const auto dir = sfeat::testing::temp_dir("eval_seq");
  std::mt19937_64 rng(5);
  AugmentationConfig aug = AugmentationConfig::none(48);
  const SyntheticSequence s = synth_sequence(generate_scene(72, 72, 6), 2, rng, aug);
  ImageSequence seq{dir, s.images, s.homographies};
  EvalOptions opts;
  opts.extract.rel_thresh = 0.0;
  opts.extract.rep_thresh = 0.0;
  const SequenceEvaluation ev = evaluate_sequence(Network::build(BackboneConfig::desk(), 1), seq, opts);
  ASSERT_EQ(ev.pairs.size(), 2u);
  // Unchanged views match themselves exactly.
  EXPECT_EQ(ev.mean_fractions[0], 1.0);
  write_mma_report(dir / "mma.txt", ev);
  std::ifstream in(dir / "mma.txt");
  std::string line;
  std::size_t data_lines = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++data_lines;
  EXPECT_EQ(data_lines, 10u);
  write_mma_plot(dir / "mma.ppm", {{ev.options.thresholds, ev.mean_fractions}});
  EXPECT_EQ(read_pnm(dir / "mma.ppm").width, 480);
}
