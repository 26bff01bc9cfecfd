#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "sfeat/checkpoint.hpp"
#include "sfeat/image.hpp"
#include "sfeat/synthetic.hpp"
#include "sfeat/train_config.hpp"

namespace sfeat {

/// Batch means of one optimizer step.
struct StepRecord {
  std::size_t step = 0;
  double reliability = 0.0;
  double repeatability = 0.0;
  double covariance = 0.0;
  double total = 0.0;
  double style_mean = 0.0;      // style-masked mean of the difference matrix
  double structure_mean = 0.0;  // structure-masked mean of the difference matrix
  double seconds = 0.0;         // wall time, kept out of the main log
};

/// Graph handles of every loss term for one training pair.
struct PairLosses {
  ad::Var reliability;
  ad::Var repeatability;
  ad::Var covariance;
  ad::Var total;
  double style_mean = 0.0;
  double structure_mean = 0.0;
};

/// Forward of both views with shared parameters followed by all three losses.
PairLosses pair_losses(const Network& net, const std::vector<ad::Var>& params,
                       const PairSample& pair, const TrainConfig& cfg, std::mt19937_64& rng);

/// Random initialization used by train() for a config.
Network initial_network(const TrainConfig& cfg);

/// Deterministic pair for (seed, step, slot): same inputs, same pair.
PairSample training_pair(const std::vector<Image>& corpus, const TrainConfig& cfg,
                         std::size_t image_index, std::size_t step, std::size_t slot);

struct TrainResult {
  Network network;
  OptimizerState optimizer;
  std::vector<StepRecord> log;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Full training run. Writes model.ckpt, train_log.txt, train_timing.txt and
/// the resolved config into out_dir. On a non-finite loss or gradient the last
/// good parameters go to last_good.ckpt and NumericError is thrown.
TrainResult train(const TrainConfig& cfg, const std::vector<Image>& corpus,
                  const std::filesystem::path& out_dir, const StepCallback& on_step = {});

/// "# step L_reli ..." header then one line per record, %.17g, no wall time.
void write_train_log(const std::filesystem::path& path, const std::vector<StepRecord>& log);

}  // namespace sfeat
