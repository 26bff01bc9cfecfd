#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>

#include "sfeat/checkpoint.hpp"
#include "sfeat/covariance_loss.hpp"
#include "sfeat/descriptor_io.hpp"
#include "sfeat/detection_losses.hpp"
#include "sfeat/error.hpp"
#include "sfeat/extract.hpp"
#include "sfeat/match.hpp"
#include "sfeat/mma.hpp"
#include "sfeat/sequence.hpp"
#include "sfeat/synthetic.hpp"
#include "sfeat/trainer.hpp"

namespace sfeat::cli {
namespace {

namespace fs = std::filesystem;

struct ExtractFlags {
  ExtractConfig cfg;
  std::vector<double> scales;
  bool pyramid = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--rel-thresh", cfg.rel_thresh, "Minimum reliability")->capture_default_str();
    cmd->add_option("--rep-thresh", cfg.rep_thresh, "Minimum repeatability")->capture_default_str();
    cmd->add_option("--topk", cfg.topk, "Keypoint budget")->capture_default_str();
    cmd->add_option("--nms-radius", cfg.nms_radius, "Non-maximum suppression radius (px)")
        ->capture_default_str();
    cmd->add_option("--scales", scales, "Descending scale factors, e.g. 1,0.71,0.5")->delimiter(',');
    cmd->add_flag("--pyramid", pyramid, "Use scales 2^(-k/4) down to 16 px");
  }
  std::vector<double> resolve() const {
    if (pyramid) return {};
    return scales.empty() ? std::vector<double>{1.0} : scales;
  }
};

void print_step(std::ostream& out, const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "step %zu  reli %.4f  repeat %.4f  cov %.4f  total %.4f  style %.4f  structure %.4f  (%.2fs)\n",
                r.step, r.reliability, r.repeatability, r.covariance, r.total, r.style_mean,
                r.structure_mean, r.seconds);
  out << buf << std::flush;
}

Network load_network(const std::string& path) { return load_checkpoint(path).network; }

int cmd_train(const std::string& config, const std::string& data, const std::string& out_dir,
              bool no_style, bool no_structure, bool no_dsc, std::optional<std::size_t> steps,
              std::optional<std::uint64_t> seed, std::optional<unsigned> threads, bool quiet,
              std::ostream& out) {
  TrainConfig cfg = config.empty() ? TrainConfig{} : load_train_config(config);
  cfg.no_style = cfg.no_style || no_style;
  cfg.no_structure = cfg.no_structure || no_structure;
  cfg.no_dsc = cfg.no_dsc || no_dsc;
  if (steps) {
    cfg.steps = *steps;
    cfg.epochs = 0;
  }
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  cfg.validate();
  const std::vector<Image> corpus = load_corpus(data);
  const std::size_t every = std::max<std::size_t>(1, cfg.steps / 20);
  train(cfg, corpus, out_dir, [&](const StepRecord& r) {
    if (!quiet && (r.step == 1 || r.step % every == 0)) print_step(out, r);
  });
  out << "wrote " << (fs::path(out_dir) / "model.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_extract(const std::string& ckpt, const std::string& image, const std::string& dst,
                const ExtractFlags& flags, std::ostream& out) {
  const Network net = load_network(ckpt);
  const Image img = read_pnm(image);
  const auto scales = flags.resolve();
  const KeypointSet set = extract_multiscale(
      net, img, scales.empty() ? default_scales(img.height, img.width) : scales, flags.cfg);
  write_keypoints(dst, set);
  out << set.size() << " keypoints, " << set.dim << "-d descriptors -> " << dst << "\n";
  return kExitOk;
}

int cmd_match(const std::string& a_path, const std::string& b_path, const std::string& policy_name,
              const std::string& dst, unsigned threads, std::ostream& out) {
  const MatchPolicy policy = parse_match_policy(policy_name);
  const KeypointSet a = read_keypoints(a_path);
  const KeypointSet b = read_keypoints(b_path);
  const MatchSet m = match(a, b, policy, MatchOptions{threads});
  out << m.size() << " matches (" << to_string(policy) << ") between " << a.size() << " and "
      << b.size() << " keypoints\n";
  if (!dst.empty()) {
    std::ofstream f(dst);
    if (!f) throw DataError("cannot write '" + dst + "'");
    f << "# a b distance xa ya xb yb\n";
    char buf[160];
    for (const Match& mm : m) {
      const Keypoint& ka = a.keypoints[mm.a];
      const Keypoint& kb = b.keypoints[mm.b];
      std::snprintf(buf, sizeof buf, "%zu %zu %.9g %.3f %.3f %.3f %.3f\n", mm.a, mm.b, mm.distance,
                    ka.x, ka.y, kb.x, kb.y);
      f << buf;
    }
    if (!f) throw DataError("write to '" + dst + "' failed");
  }
  return kExitOk;
}

void print_curve(std::ostream& out, const std::vector<double>& thresholds,
                 const std::vector<double>& fractions) {
  char buf[64];
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    std::snprintf(buf, sizeof buf, "MMA@%g %.4f\n", thresholds[t], fractions[t]);
    out << buf;
  }
}

int cmd_eval_sequence(const std::string& seq_dir, const std::string& ckpt, const std::string& dst,
                      const std::string& plot, const std::string& policy_name,
                      const ExtractFlags& flags, std::ostream& out) {
  EvalOptions opts;
  opts.extract = flags.cfg;
  opts.scales = flags.resolve();
  opts.policy = parse_match_policy(policy_name);
  const Network net = load_network(ckpt);
  const ImageSequence seq = load_sequence(seq_dir);
  const SequenceEvaluation eval = evaluate_sequence(net, seq, opts);
  write_mma_report(dst, eval);
  if (!plot.empty()) write_mma_plot(plot, {MMACurve{opts.thresholds, eval.mean_fractions}});
  print_curve(out, opts.thresholds, eval.mean_fractions);
  return kExitOk;
}

int cmd_eval_pair(const std::string& a_path, const std::string& b_path, const std::string& h_path,
                  const std::string& dst, const std::string& plot, const std::string& policy_name,
                  std::ostream& out) {
  const MatchPolicy policy = parse_match_policy(policy_name);
  const KeypointSet a = read_keypoints(a_path);
  const KeypointSet b = read_keypoints(b_path);
  const Homography h = h_path.empty() ? Homography() : read_homography_file(h_path);
  const MMAReport r = mma(match(a, b, policy), a, b, h);
  std::ofstream f(dst);
  if (!f) throw DataError("cannot write report '" + dst + "'");
  f << "# mean matching accuracy\n# policy " << to_string(policy) << "\n# descriptors " << a_path
    << " " << b_path << "\n# homography " << (h_path.empty() ? "identity" : h_path) << "\n# pair keypoints "
    << a.size() << " " << b.size() << " matches " << r.num_matches
    << (r.no_matches ? " (no matches)" : "") << "\n";
  char buf[64];
  for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%g\t%.6f\n", r.thresholds[t], r.fractions[t]);
    f << buf;
  }
  if (!f) throw DataError("write to '" + dst + "' failed");
  if (!plot.empty()) write_mma_plot(plot, {MMACurve{r.thresholds, r.fractions}});
  print_curve(out, r.thresholds, r.fractions);
  return kExitOk;
}

int cmd_inspect_cov(const std::string& ckpt, const std::vector<std::string>& pair,
                    const std::string& dst, std::ostream& out) {
  const Network net = load_network(ckpt);
  const FeatureMaps m1 = net.forward(to_tensor(to_rgb(read_pnm(pair[0]))));
  const FeatureMaps m2 = net.forward(to_tensor(to_rgb(read_pnm(pair[1]))));
  const CovarianceArtifacts art = covariance_artifacts(m1.descriptors, m2.descriptors);
  const fs::path dir(dst);
  fs::create_directories(dir);
  write_matrix_text(dir / "sigma_s1.txt", art.first.values);
  write_matrix_text(dir / "sigma_s2.txt", art.second.values);
  write_matrix_text(dir / "sigma_c.txt", art.difference.values);
  write_matrix_text(dir / "style_mask.txt", art.masks.style);
  write_matrix_text(dir / "structure_mask.txt", art.masks.structure);
  write_matrix_image(dir / "sigma_s1.pgm", art.first.values, -1.0, 1.0);
  write_matrix_image(dir / "sigma_s2.pgm", art.second.values, -1.0, 1.0);
  write_matrix_image(dir / "sigma_c.pgm", art.difference.values, 0.0, 2.0);
  write_matrix_image(dir / "style_mask.pgm", art.masks.style, 0.0, 1.0);
  write_matrix_image(dir / "structure_mask.pgm", art.masks.structure, 0.0, 1.0);
  std::ofstream f(dir / "summary.txt");
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "threshold %.17g\nstyle_count %zu\nstructure_count %zu\nstyle_mean %.17g\n"
                "structure_mean %.17g\n",
                art.masks.threshold, art.masks.style_count, art.masks.structure_count,
                art.style_mean, art.structure_mean);
  f << buf;
  if (!f) throw DataError("write to '" + (dir / "summary.txt").string() + "' failed");
  out << buf;
  return kExitOk;
}

KeypointSet random_set(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  KeypointSet s;
  s.dim = dim;
  for (std::size_t i = 0; i < count; ++i) {
    s.keypoints.push_back({static_cast<float>(i % 1000), static_cast<float>(i / 1000), 1.0f, 1.0f});
    double norm = 0.0;
    const std::size_t base = s.descriptors.size();
    for (std::size_t k = 0; k < dim; ++k) {
      s.descriptors.push_back(n(rng));
      norm += static_cast<double>(s.descriptors.back()) * s.descriptors.back();
    }
    for (std::size_t k = 0; k < dim; ++k) s.descriptors[base + k] /= static_cast<float>(std::sqrt(norm));
  }
  return s;
}

int cmd_bench(const std::string& a_path, const std::string& b_path, std::size_t random_count,
              std::size_t dim, std::uint64_t seed, std::size_t repeats, const std::string& policy_name,
              unsigned threads, const std::string& dst, std::ostream& out) {
  const MatchPolicy policy = parse_match_policy(policy_name);
  KeypointSet a, b;
  if (random_count > 0) {
    std::mt19937_64 rng(seed);
    a = random_set(random_count, dim, rng);
    b = random_set(random_count, dim, rng);
  } else {
    if (a_path.empty() || b_path.empty()) throw ConfigError("bench needs --a and --b, or --random");
    a = read_keypoints(a_path);
    b = read_keypoints(b_path);
  }
  const BenchStats s = bench_match(a, b, repeats, policy, MatchOptions{threads});
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "policy %s\ncount_a %zu\ncount_b %zu\ndim %zu\nthreads %u\nwarmup %zu\nrepeats %zu\n"
                "matches %zu\nmedian_seconds %.6f\nmin_seconds %.6f\n",
                to_string(policy).c_str(), s.count_a, s.count_b, s.dim, s.threads, s.warmup_runs,
                s.samples.size(), s.matches, s.median_seconds, s.min_seconds);
  out << buf;
  if (!dst.empty()) {
    std::ofstream f(dst);
    if (!f) throw DataError("cannot write '" + dst + "'");
    f << buf;
    for (double v : s.samples) f << "sample_seconds " << v << "\n";
  }
  return kExitOk;
}

int cmd_make_corpus(const std::string& dst, std::size_t count, int size, std::uint64_t seed,
                    std::ostream& out) {
  fs::create_directories(dst);
  const auto corpus = generate_corpus(count, size, size, seed);
  char name[32];
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::snprintf(name, sizeof name, "scene_%04zu.ppm", i);
    write_pnm(fs::path(dst) / name, corpus[i]);
  }
  out << corpus.size() << " images -> " << dst << "\n";
  return kExitOk;
}

int cmd_make_sequence(const std::string& dst, std::size_t targets, int size, double jitter,
                      bool photometric, std::uint64_t seed, std::ostream& out) {
  AugmentationConfig aug;
  aug.crop = size;
  aug.perspective_jitter = jitter;
  aug.photometric = photometric;
  aug.validate();
  const int source_size = size + size / 2;
  const Image scene = generate_scene(source_size, source_size, seed);
  std::mt19937_64 rng(mix_seed(seed, 0x5e9));
  const SyntheticSequence seq = synth_sequence(scene, targets, rng, aug);
  write_sequence(dst, seq.images, seq.homographies);
  out << seq.images.size() << " images -> " << dst << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local feature training, extraction and evaluation", "sfeat"};
  app.require_subcommand(1);
  app.footer("Exit status: 0 success, 1 usage or config error, 2 data or model error.");

  // train
  std::string config, data, out_dir;
  bool no_style = false, no_structure = false, no_dsc = false, quiet = false;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> train_threads;
  auto* train_cmd = app.add_subcommand("train", "Train a network on an image directory");
  train_cmd->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data, "Directory of .ppm/.pgm training images")->required();
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_flag("--no-style", no_style, "Drop the style suppression term");
  train_cmd->add_flag("--no-structure", no_structure, "Drop the structure expansion term");
  train_cmd->add_flag("--no-dsc", no_dsc, "Plain convolutions in the tail");
  train_cmd->add_option("--steps", steps, "Override the step budget");
  train_cmd->add_option("--seed", seed, "Override the seed");
  train_cmd->add_option("--threads", train_threads, "Pairs processed concurrently");
  train_cmd->add_flag("--quiet", quiet, "No progress output");

  // extract
  std::string ckpt, image, desc_out;
  ExtractFlags extract_flags;
  auto* extract_cmd = app.add_subcommand("extract", "Detect and describe keypoints of one image");
  extract_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  extract_cmd->add_option("--image", image, "Input .ppm/.pgm")->required();
  extract_cmd->add_option("--out", desc_out, "Descriptor file to write")->required();
  extract_flags.add_to(extract_cmd);

  // match
  std::string desc_a, desc_b, policy = "mutual_nn", match_out;
  unsigned match_threads = 1;
  auto* match_cmd = app.add_subcommand("match", "Match two descriptor files");
  match_cmd->add_option("--a", desc_a, "First descriptor file")->required();
  match_cmd->add_option("--b", desc_b, "Second descriptor file")->required();
  match_cmd->add_option("--policy", policy, "nn or mutual_nn")->capture_default_str();
  match_cmd->add_option("--out", match_out, "Write the matches as text");
  match_cmd->add_option("--threads", match_threads, "Worker threads")->capture_default_str();

  // eval-mma
  std::string seq_dir, eval_ckpt, report, plot, eval_a, eval_b, homography;
  ExtractFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval-mma", "Mean matching accuracy at 1..10 px");
  auto* seq_opt = eval_cmd->add_option("--seq", seq_dir, "Sequence directory (1.ppm, k.ppm, H_1_k)");
  auto* eval_ckpt_opt = eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint");
  auto* eval_a_opt = eval_cmd->add_option("--a", eval_a, "Descriptor file of the reference image");
  auto* eval_b_opt = eval_cmd->add_option("--b", eval_b, "Descriptor file of the target image");
  eval_cmd->add_option("--homography", homography, "H file mapping a onto b (default identity)");
  eval_cmd->add_option("--out", report, "Report file")->required();
  eval_cmd->add_option("--plot", plot, "Accuracy curve image (.ppm)");
  eval_cmd->add_option("--policy", policy, "nn or mutual_nn")->capture_default_str();
  eval_flags.add_to(eval_cmd);
  seq_opt->needs(eval_ckpt_opt);
  eval_ckpt_opt->needs(seq_opt);
  eval_a_opt->needs(eval_b_opt);
  eval_b_opt->needs(eval_a_opt);
  seq_opt->excludes(eval_a_opt);

  // inspect-cov
  std::string cov_ckpt, cov_out;
  std::vector<std::string> pair;
  auto* cov_cmd = app.add_subcommand("inspect-cov", "Dump covariance matrices and masks of a pair");
  cov_cmd->add_option("--ckpt", cov_ckpt, "Checkpoint")->required();
  cov_cmd->add_option("--pair", pair, "Two images")->required()->expected(2);
  cov_cmd->add_option("--out", cov_out, "Output directory")->required();

  // bench
  std::string bench_out;
  std::size_t repeats = 5, random_count = 0, random_dim = 128;
  std::uint64_t bench_seed = 1;
  unsigned bench_threads = 1;
  auto* bench_cmd = app.add_subcommand("bench", "Time descriptor matching");
  bench_cmd->add_option("--a", desc_a, "First descriptor file");
  bench_cmd->add_option("--b", desc_b, "Second descriptor file");
  bench_cmd->add_option("--random", random_count, "Use two random sets of this size instead");
  bench_cmd->add_option("--dim", random_dim, "Dimension of random sets")->capture_default_str();
  bench_cmd->add_option("--seed", bench_seed, "Seed of random sets")->capture_default_str();
  bench_cmd->add_option("--repeats", repeats, "Timed runs (>= 3)")->capture_default_str();
  bench_cmd->add_option("--policy", policy, "nn or mutual_nn")->capture_default_str();
  bench_cmd->add_option("--threads", bench_threads, "Worker threads")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "Write the stats to a file");

  // make-corpus / make-sequence
  std::string gen_out;
  std::size_t gen_count = 32;
  int gen_size = 128;
  std::uint64_t gen_seed = 1;
  double jitter = 0.15;
  bool no_photometric = false;
  auto* corpus_cmd = app.add_subcommand("make-corpus", "Write procedural training scenes");
  corpus_cmd->add_option("--out", gen_out, "Output directory")->required();
  corpus_cmd->add_option("--count", gen_count, "Number of images")->capture_default_str();
  corpus_cmd->add_option("--size", gen_size, "Side length (px)")->capture_default_str();
  corpus_cmd->add_option("--seed", gen_seed, "Seed")->capture_default_str();
  auto* seq_cmd = app.add_subcommand("make-sequence", "Write a synthetic evaluation sequence");
  seq_cmd->add_option("--out", gen_out, "Output directory")->required();
  seq_cmd->add_option("--targets", gen_count, "Warped views besides the reference")->capture_default_str();
  seq_cmd->add_option("--size", gen_size, "Side length (px)")->capture_default_str();
  seq_cmd->add_option("--jitter", jitter, "Corner jitter as a fraction of the size")->capture_default_str();
  seq_cmd->add_flag("--no-photometric", no_photometric, "Geometric change only");
  seq_cmd->add_option("--seed", gen_seed, "Seed")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*train_cmd) {
      return cmd_train(config, data, out_dir, no_style, no_structure, no_dsc, steps, seed,
                       train_threads, quiet, out);
    }
    if (*extract_cmd) return cmd_extract(ckpt, image, desc_out, extract_flags, out);
    if (*match_cmd) return cmd_match(desc_a, desc_b, policy, match_out, match_threads, out);
    if (*eval_cmd) {
      if (!seq_dir.empty()) return cmd_eval_sequence(seq_dir, eval_ckpt, report, plot, policy, eval_flags, out);
      if (!eval_a.empty()) return cmd_eval_pair(eval_a, eval_b, homography, report, plot, policy, out);
      err << "eval-mma needs --seq with --ckpt, or --a with --b\n";
      return kExitUsage;
    }
    if (*cov_cmd) return cmd_inspect_cov(cov_ckpt, pair, cov_out, out);
    if (*bench_cmd) {
      return cmd_bench(desc_a, desc_b, random_count, random_dim, bench_seed, repeats, policy,
                       bench_threads, bench_out, out);
    }
    if (*corpus_cmd) return cmd_make_corpus(gen_out, gen_count, gen_size, gen_seed, out);
    if (*seq_cmd) {
      return cmd_make_sequence(gen_out, gen_count, gen_size, jitter, !no_photometric, gen_seed, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace sfeat::cli
