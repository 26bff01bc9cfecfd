#include "sfeat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include "sfeat/covariance_loss.hpp"
#include "sfeat/detection_losses.hpp"
#include "sfeat/error.hpp"

namespace sfeat {
namespace {

struct PairResult {
  std::vector<ad::Tensor> grads;
  StepRecord record;
};

PairResult run_pair(const Network& net, const PairSample& pair, const TrainConfig& cfg,
                    std::uint64_t seed) {
  ad::Graph g;
  const auto params = net.bind(g, true);
  std::mt19937_64 rng(seed);
  const PairLosses l = pair_losses(net, params, pair, cfg, rng);
  PairResult r;
  r.record.reliability = l.reliability.value().item();
  r.record.repeatability = l.repeatability.value().item();
  r.record.covariance = l.covariance.value().item();
  r.record.total = l.total.value().item();
  r.record.style_mean = l.style_mean;
  r.record.structure_mean = l.structure_mean;
  if (!std::isfinite(r.record.total)) return r;
  g.backward(l.total);
  for (const auto& p : params) r.grads.push_back(p.grad());
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

}  // namespace

PairLosses pair_losses(const Network& net, const std::vector<ad::Var>& params,
                       const PairSample& pair, const TrainConfig& cfg, std::mt19937_64& rng) {
  ad::Graph& g = params.front().graph();
  const ad::Var i1 = g.constant(to_tensor(pair.first));
  const ad::Var i2 = g.constant(to_tensor(pair.second));
  const FeatureMapVars m1 = net.forward(params, i1);
  const FeatureMapVars m2 = net.forward(params, i2);

  PairLosses out;
  out.reliability = reliability_loss(m1.descriptors, m2.descriptors, m1.reliability,
                                     pair.correspondence, cfg.reliability, rng)
                        .loss;
  const WarpedMap warped = warp_repeatability(m2.repeatability, pair.correspondence);
  out.repeatability =
      repeatability_loss(m1.repeatability, warped.map, warped.valid, cfg.repeatability).total;

  const ad::Var sigma1 = standardized_covariance(standardize(m1.descriptors));
  const ad::Var sigma2 = standardized_covariance(standardize(m2.descriptors));
  const ad::Var sigma_c = covariance_difference(sigma1, sigma2);
  const MaskPair masks = build_masks(sigma_c.value());
  out.covariance = cov_loss(sigma_c, masks, cfg.cov_options());
  out.style_mean = masked_mean(sigma_c.value(), masks.style);
  out.structure_mean = masked_mean(sigma_c.value(), masks.structure);
  out.total = total_loss(out.reliability, out.repeatability, out.covariance, cfg.weights);
  return out;
}

Network initial_network(const TrainConfig& cfg) {
  return Network::build(cfg.network_config(), mix_seed(cfg.seed, 0x6e6574));
}

PairSample training_pair(const std::vector<Image>& corpus, const TrainConfig& cfg,
                         std::size_t image_index, std::size_t step, std::size_t slot) {
  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, step), slot));
  return synth_pair(corpus.at(image_index), rng, cfg.augmentation);
}

void write_train_log(const std::filesystem::path& path, const std::vector<StepRecord>& log) {
  std::string text = "# step L_reli L_repeat L_cov total style_mean structure_mean\n";
  char buf[512];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %.17g %.17g %.17g %.17g\n", r.step,
                  r.reliability, r.repeatability, r.covariance, r.total, r.style_mean,
                  r.structure_mean);
    text += buf;
  }
  write_text(path, text);
}

TrainResult train(const TrainConfig& cfg, const std::vector<Image>& corpus,
                  const std::filesystem::path& out_dir, const StepCallback& on_step) {
  cfg.validate();
  if (corpus.empty()) throw DataError("training corpus is empty");
  for (const Image& img : corpus) {
    if (img.height < cfg.augmentation.crop || img.width < cfg.augmentation.crop) {
      throw DataError("corpus image of " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " is smaller than the crop");
    }
  }
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "config.txt", format_train_config(cfg));

  const std::size_t steps =
      cfg.epochs > 0 ? cfg.epochs * ((corpus.size() + cfg.batch_size - 1) / cfg.batch_size) : cfg.steps;

  TrainResult result{initial_network(cfg), {}, {}};
  result.optimizer = OptimizerState::zeros_like(result.network);

  std::vector<std::size_t> order(corpus.size());
  std::size_t cursor = order.size();
  std::size_t pass = 0;
  auto next_image = [&] {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 shuffle_rng(mix_seed(cfg.seed ^ 0x5eed, pass++));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  std::string timing = "# step seconds\n";
  for (std::size_t step = 1; step <= steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<PairSample> batch;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      batch.push_back(training_pair(corpus, cfg, next_image(), step, b));
    }
    std::vector<PairResult> results(batch.size());
    auto work = [&](std::size_t b) {
      results[b] = run_pair(result.network, batch[b], cfg, mix_seed(mix_seed(cfg.seed, step), b + 1000003));
    };
    const unsigned threads = std::min<unsigned>(cfg.threads, static_cast<unsigned>(batch.size()));
    if (threads <= 1) {
      for (std::size_t b = 0; b < batch.size(); ++b) work(b);
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          for (std::size_t b = t; b < batch.size(); b += threads) work(b);
        });
      }
      for (auto& th : pool) th.join();
    }

    // Sum in slot order so the result does not depend on thread count.
    StepRecord rec;
    rec.step = step;
    const double inv = 1.0 / static_cast<double>(batch.size());
    std::vector<ad::Tensor> grads;
    bool finite = true;
    for (const auto& r : results) {
      finite = finite && std::isfinite(r.record.total) && !r.grads.empty();
      rec.reliability += r.record.reliability * inv;
      rec.repeatability += r.record.repeatability * inv;
      rec.covariance += r.record.covariance * inv;
      rec.total += r.record.total * inv;
      rec.style_mean += r.record.style_mean * inv;
      rec.structure_mean += r.record.structure_mean * inv;
      if (!finite) continue;
      if (grads.empty()) {
        for (const auto& gr : r.grads) grads.emplace_back(gr.shape, 0.0);
      }
      for (std::size_t i = 0; i < grads.size(); ++i) {
        for (std::size_t k = 0; k < grads[i].size(); ++k) grads[i][k] += r.grads[i][k] * inv;
      }
    }
    auto abort = [&](const std::string& why) {
      save_checkpoint(out_dir / "last_good.ckpt", result.network, &result.optimizer, step - 1);
      write_train_log(out_dir / "train_log.txt", result.log);
      throw NumericError("step " + std::to_string(step) + ": " + why + "; last good parameters in " +
                         (out_dir / "last_good.ckpt").string());
    };
    if (!finite) abort("non-finite loss");
    try {
      adam_step(result.network, grads, result.optimizer, cfg.adam);
    } catch (const NumericError& e) {
      abort(e.what());
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu %.6f\n", step, rec.seconds);
    timing += buf;
    if (on_step) on_step(rec);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      save_checkpoint(out_dir / ("step_" + std::to_string(step) + ".ckpt"), result.network,
                      &result.optimizer, step);
    }
  }
  save_checkpoint(out_dir / "model.ckpt", result.network, &result.optimizer, steps);
  write_train_log(out_dir / "train_log.txt", result.log);
  write_text(out_dir / "train_timing.txt", timing);
  return result;
}

}  // namespace sfeat
