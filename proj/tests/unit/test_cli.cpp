#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "sfeat/checkpoint.hpp"
#include "sfeat/image.hpp"
#include "sfeat/synthetic.hpp"
#include "temp_dir.hpp"

using namespace sfeat;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

CliResult sfeat_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sfeat");
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, UnknownFlagIsUsageError) {
  const CliResult r = sfeat_cli({"match", "--bogus"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(sfeat_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(sfeat_cli({"--help"}).code, cli::kExitOk);
}

TEST(Cli, TrainWithMissingDataNamesPath) {
  const auto dir = sfeat::testing::temp_dir("cli_missing");
  const std::string missing = (dir / "no_such_dir").string();
  const CliResult r = sfeat_cli({"train", "--data", missing, "--out", (dir / "out").string(), "--quiet"});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find(missing), std::string::npos);
}

TEST(Cli, BadConfigIsUsageError) {
  const auto dir = sfeat::testing::temp_dir("cli_badcfg");
  std::ofstream(dir / "c.txt") << "warp_speed = 9\n";
  const CliResult r = sfeat_cli({"train", "--config", (dir / "c.txt").string(), "--data", dir.string(), "--out",
                           (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("warp_speed"), std::string::npos);
}

TEST(Cli, TrainExtractMatchEvaluate) {
  const auto dir = sfeat::testing::temp_dir("cli_flow");
  ASSERT_EQ(sfeat_cli({"make-corpus", "--out", (dir / "data").string(), "--count", "3", "--size", "64"}).code, 0);
  std::ofstream(dir / "cfg.txt") << "batch_size = 2\ncrop = 32\nchannel_widths = 8, 8\ndescriptor_dim = 8\n"
                                    "num_negatives = 8\n";
  const CliResult t = sfeat_cli({"train", "--config", (dir / "cfg.txt").string(), "--data", (dir / "data").string(),
                           "--out", (dir / "run").string(), "--steps", "2", "--no-style", "--quiet"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(slurp(dir / "run" / "config.txt").find("no_style = true"), std::string::npos);

  const std::string ckpt = (dir / "run" / "model.ckpt").string();
  const std::string img = (dir / "data" / "scene_0000.ppm").string();
  const CliResult e = sfeat_cli({"extract", "--ckpt", ckpt, "--image", img, "--out", (dir / "a.sfdk").string(),
                           "--rel-thresh", "0", "--rep-thresh", "0"});
  ASSERT_EQ(e.code, 0) << e.err;

  const CliResult m = sfeat_cli({"match", "--a", (dir / "a.sfdk").string(), "--b", (dir / "a.sfdk").string(), "--out",
                           (dir / "m.txt").string()});
  ASSERT_EQ(m.code, 0) << m.err;

  const CliResult ev = sfeat_cli({"eval-mma", "--a", (dir / "a.sfdk").string(), "--b", (dir / "a.sfdk").string(),
                            "--out", (dir / "mma.txt").string(), "--plot", (dir / "mma.ppm").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("MMA@1 1.0000"), std::string::npos) << ev.out;
  EXPECT_NE(slurp(dir / "mma.txt").find("1\t1.000000"), std::string::npos);

  ASSERT_EQ(sfeat_cli({"make-sequence", "--out", (dir / "seq").string(), "--targets", "2", "--size", "48"}).code, 0);
  const CliResult es = sfeat_cli({"eval-mma", "--seq", (dir / "seq").string(), "--ckpt", ckpt, "--out",
                            (dir / "seq_mma.txt").string(), "--rel-thresh", "0", "--rep-thresh", "0"});
  ASSERT_EQ(es.code, 0) << es.err;
  EXPECT_NE(es.out.find("MMA@3"), std::string::npos);

  EXPECT_EQ(sfeat_cli({"eval-mma", "--out", (dir / "x.txt").string()}).code, cli::kExitUsage);
  EXPECT_EQ(sfeat_cli({"extract", "--ckpt", img, "--image", img, "--out", (dir / "b.sfdk").string()}).code,
            cli::kExitData);
}

TEST(Cli, InspectCovOnPhotometricPair) {
  const auto dir = sfeat::testing::temp_dir("cli_cov");
  save_checkpoint(dir / "m.ckpt", Network::build(BackboneConfig::desk(), 3));
  Image first = crop(generate_scene(96, 96, 5), 16, 16, 64, 64);
  Image second = first;
  std::mt19937_64 rng(1);
  apply_photometric(second, PhotometricParams{0.15, 1.3, {1.1, 0.9, 1.05}, 0.0}, rng);
  write_pnm(dir / "1.ppm", first);
  write_pnm(dir / "2.ppm", second);
  const CliResult r = sfeat_cli({"inspect-cov", "--ckpt", (dir / "m.ckpt").string(), "--pair", (dir / "1.ppm").string(),
                           (dir / "2.ppm").string(), "--out", (dir / "cov").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream summary(slurp(dir / "cov" / "summary.txt"));
  std::string key;
  double value = 0.0, style_count = 0.0, style_mean = 0.0;
  while (summary >> key >> value) {
    if (key == "style_count") style_count = value;
    if (key == "style_mean") style_mean = value;
  }
  EXPECT_GT(style_count, 0.0);
  EXPECT_GT(style_mean, 0.0);
  for (const char* f : {"sigma_s1.txt", "sigma_c.txt", "style_mask.pgm", "structure_mask.txt"})
    EXPECT_TRUE(std::filesystem::exists(dir / "cov" / f)) << f;
}

TEST(Cli, BenchRandomSets) {
  const auto dir = sfeat::testing::temp_dir("cli_bench");
  const CliResult r = sfeat_cli({"bench", "--random", "300", "--dim", "16", "--repeats", "3", "--out",
                           (dir / "b.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("repeats 3"), std::string::npos);
  EXPECT_NE(r.out.find("warmup 1"), std::string::npos);
  EXPECT_NE(slurp(dir / "b.txt").find("sample_seconds"), std::string::npos);
  EXPECT_EQ(sfeat_cli({"bench", "--random", "10", "--repeats", "2"}).code, cli::kExitUsage);
  EXPECT_EQ(sfeat_cli({"bench"}).code, cli::kExitUsage);
}
