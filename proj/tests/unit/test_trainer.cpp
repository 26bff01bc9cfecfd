#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "sfeat/adam.hpp"
#include "sfeat/checkpoint.hpp"
#include "sfeat/error.hpp"
#include "sfeat/train_config.hpp"
#include "sfeat/trainer.hpp"
#include "temp_dir.hpp"

using namespace sfeat;
using ad::Tensor;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 2;
  cfg.augmentation.crop = 32;
  cfg.backbone.descriptor_dim = 8;
  cfg.backbone.channel_widths = {8, 8};
  cfg.reliability.num_negatives = 8;
  cfg.adam.lr = 1e-3;
  return cfg;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w = Tensor::scalar(0.0);
  OptimizerState st;
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  adam_step({&w}, {Tensor::scalar(1.0)}, st, cfg);
  EXPECT_NEAR(w.item(), -1e-4, 1e-10);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradientOnlyShrinks) {
  Tensor w({3}, {0.5, -0.2, 0.0});
  OptimizerState st;
  adam_step({&w}, {Tensor({3}, 0.0)}, st, AdamConfig{});
  EXPECT_LT(w[0], 0.5);
  EXPECT_GT(w[0], 0.0);
  EXPECT_GT(w[1], -0.2);
  EXPECT_EQ(w[2], 0.0);
  AdamConfig no_decay;
  no_decay.weight_decay = 0.0;
  Tensor v({2}, {0.5, -0.2});
  OptimizerState st2;
  adam_step({&v}, {Tensor({2}, 0.0)}, st2, no_decay);
  EXPECT_EQ(v.data, (std::vector<double>{0.5, -0.2}));
}

TEST(Adam, NonFiniteGradientAbortsBeforeUpdate) {
  Tensor a({2}, 1.0), b({2}, 1.0);
  OptimizerState st;
  EXPECT_THROW(adam_step({&a, &b}, {Tensor({2}, 0.1), Tensor({2}, {0.0, std::nan("")})}, st, AdamConfig{}),
               NumericError);
  EXPECT_EQ(a.data, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(st.step, 0u);
  EXPECT_THROW(adam_step({&a}, {Tensor({3}, 0.1)}, st, AdamConfig{}), ShapeError);
  AdamConfig bad;
  bad.beta1 = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    Tensor w({4}, {0.1, 0.2, -0.3, 0.4});
    OptimizerState st;
    for (int k = 0; k < 50; ++k) {
      Tensor g({4});
      for (std::size_t i = 0; i < 4; ++i) g[i] = std::sin(k * 0.7 + w[i]);
      adam_step({&w}, {g}, st, AdamConfig{});
    }
    return w.data;
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainConfig, ParsesKeysAndPresets) {
  const TrainConfig cfg = parse_train_config(
      "# comment\nlr = 0.001\nbatch_size=4\n\nsteps = 12 # trailing\nno_style = true\n"
      "channel_widths = 4, 8\npreset = desk\n");
  EXPECT_EQ(cfg.adam.lr, 0.001);
  EXPECT_EQ(cfg.batch_size, 4u);
  EXPECT_EQ(cfg.steps, 12u);
  EXPECT_TRUE(cfg.no_style);
  EXPECT_EQ(cfg.backbone.channel_widths, (std::vector<std::size_t>{4, 8}));
  const TrainConfig full = parse_train_config("preset = full\n");
  EXPECT_EQ(full.backbone.descriptor_dim, 128u);
  EXPECT_EQ(full.augmentation.crop, 192);
}

TEST(TrainConfig, ErrorsNameTheLine) {
  try {
    parse_train_config("lr = 1e-3\nlearning_rate = 2\n", "cfg.txt");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.txt:2"), std::string::npos);
  }
  EXPECT_THROW(parse_train_config("batch_size = -1\n"), ConfigError);
  EXPECT_THROW(parse_train_config("lr = fast\n"), ConfigError);
  EXPECT_THROW(parse_train_config("steps\n"), ConfigError);
  EXPECT_THROW(parse_train_config("batch_size = 0\n"), ConfigError);
  EXPECT_THROW(parse_train_config("preset = huge\n"), ConfigError);
}

TEST(TrainConfig, FormatRoundTrips) {
  TrainConfig cfg = tiny_config();
  cfg.no_dsc = true;
  cfg.weights.covariance = 0.5;
  cfg.seed = 77;
  const TrainConfig back = parse_train_config(format_train_config(cfg));
  EXPECT_EQ(format_train_config(back), format_train_config(cfg));
  EXPECT_TRUE(back.no_dsc);
  EXPECT_FALSE(back.network_config().use_dsc_tail);
}

TEST(Trainer, PairsAreDeterministic) {
  const auto corpus = generate_corpus(2, 64, 64, 1);
  const TrainConfig cfg = tiny_config();
  const PairSample a = training_pair(corpus, cfg, 1, 5, 0), b = training_pair(corpus, cfg, 1, 5, 0);
  EXPECT_EQ(a.second.data, b.second.data);
  EXPECT_NE(training_pair(corpus, cfg, 1, 5, 1).second.data, a.second.data);
}

TEST(Trainer, AblationDropsCovarianceTerm) {
  const auto corpus = generate_corpus(1, 64, 64, 2);
  TrainConfig cfg = tiny_config();
  cfg.no_style = cfg.no_structure = true;
  const Network net = initial_network(cfg);
  const PairSample pair = training_pair(corpus, cfg, 0, 0, 0);
  ad::Graph g;
  const auto params = net.bind(g, true);
  std::mt19937_64 rng(3);
  const PairLosses l = pair_losses(net, params, pair, cfg, rng);
  EXPECT_EQ(l.covariance.value().item(), 0.0);
  EXPECT_NEAR(l.total.value().item(), l.reliability.value().item() + l.repeatability.value().item(), 1e-12);

  // The covariance branch alone contributes no gradient when both terms are off.
  TrainConfig cov_only = cfg;
  cov_only.weights.reliability = 0.0;
  cov_only.weights.repeatability = 0.0;
  ad::Graph g2;
  const auto p2 = net.bind(g2, true);
  std::mt19937_64 rng2(3);
  g2.backward(pair_losses(net, p2, pair, cov_only, rng2).total);
  for (const auto& v : p2)
    for (double x : v.grad().data) ASSERT_EQ(x, 0.0);
}

TEST(Trainer, RunWritesOutputsAndIsDeterministic) {
  const auto corpus = generate_corpus(3, 64, 64, 4);
  TrainConfig cfg = tiny_config();
  cfg.checkpoint_every = 2;
  const auto d1 = sfeat::testing::temp_dir("train_a"), d2 = sfeat::testing::temp_dir("train_b");
  std::size_t calls = 0;
  const TrainResult r1 = train(cfg, corpus, d1, [&](const StepRecord&) { ++calls; });
  cfg.threads = 2;
  const TrainResult r2 = train(cfg, corpus, d2);
  EXPECT_EQ(calls, 3u);
  ASSERT_EQ(r1.log.size(), 3u);
  for (const char* f : {"model.ckpt", "train_log.txt", "train_timing.txt", "config.txt", "step_2.ckpt"})
    EXPECT_TRUE(std::filesystem::exists(d1 / f)) << f;
  EXPECT_EQ(slurp(d1 / "train_log.txt"), slurp(d2 / "train_log.txt"));
  EXPECT_EQ(slurp(d1 / "model.ckpt"), slurp(d2 / "model.ckpt"));
  const Checkpoint ck = load_checkpoint(d1 / "model.ckpt");
  EXPECT_EQ(ck.training_step, 3u);
  ASSERT_TRUE(ck.optimizer.has_value());
  EXPECT_EQ(ck.optimizer->step, 3u);
  EXPECT_EQ(slurp(d1 / "train_log.txt").rfind("# step L_reli L_repeat L_cov total", 0), 0u);
  for (const auto& rec : r1.log) {
    EXPECT_TRUE(std::isfinite(rec.total));
    EXPECT_NEAR(rec.total, rec.reliability + rec.repeatability + 2.0 * rec.covariance, 1e-9);
  }
}

TEST(Trainer, WeightDecayShrinksWithoutSignal) {
  const auto corpus = generate_corpus(2, 64, 64, 5);
  TrainConfig cfg = tiny_config();
  cfg.weights = {0.0, 0.0, 0.0};
  cfg.steps = 2;
  cfg.adam.weight_decay = 0.1;
  const TrainResult r = train(cfg, corpus, sfeat::testing::temp_dir("train_decay"));
  const Network init = initial_network(cfg);
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < init.parameters().size(); ++i)
    for (std::size_t k = 0; k < init.parameters()[i].value.size(); ++k) {
      before += std::fabs(init.parameters()[i].value[k]);
      after += std::fabs(r.network.parameters()[i].value[k]);
    }
  EXPECT_LT(after, before);
}

TEST(Trainer, RejectsBadInputs) {
  TrainConfig cfg = tiny_config();
  EXPECT_THROW(train(cfg, {}, sfeat::testing::temp_dir("train_empty")), DataError);
  cfg.augmentation.crop = 8;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
