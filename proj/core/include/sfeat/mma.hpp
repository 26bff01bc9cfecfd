#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "sfeat/extract.hpp"
#include "sfeat/homography.hpp"
#include "sfeat/match.hpp"
#include "sfeat/sequence.hpp"

namespace sfeat {

/// 1, 2, ..., 10 pixels.
std::vector<double> default_mma_thresholds();

struct MMAReport {
  std::vector<double> thresholds;
  std::vector<double> fractions;
  std::vector<std::size_t> correct;
  std::size_t num_matches = 0;
  /// No matches: every fraction is 0.
  bool no_matches = false;
};

/// A match is correct at t when |H(p_a) - p_b| <= t. Thresholds must ascend.
MMAReport mma(const MatchSet& matches, const KeypointSet& a, const KeypointSet& b,
              const Homography& h, const std::vector<double>& thresholds = default_mma_thresholds());

struct EvalOptions {
  ExtractConfig extract;
  /// Empty means the full default pyramid.
  std::vector<double> scales = {1.0};
  MatchPolicy policy = MatchPolicy::kMutual;
  std::vector<double> thresholds = default_mma_thresholds();
};

struct PairEvaluation {
  std::size_t target = 0;  // image index in the sequence, 2-based like the files
  std::size_t keypoints_a = 0;
  std::size_t keypoints_b = 0;
  MMAReport report;
  double match_seconds = 0.0;
};

struct SequenceEvaluation {
  EvalOptions options;
  std::vector<PairEvaluation> pairs;
  /// Per-threshold mean of the pair fractions.
  std::vector<double> mean_fractions;
  double extract_seconds = 0.0;
};

/// Reference image 1 against every other image of the sequence.
SequenceEvaluation evaluate_sequence(const Network& net, const ImageSequence& seq,
                                     const EvalOptions& opts);

/// "threshold<TAB>fraction" lines after '#' comment lines with settings,
/// match counts and timing.
void write_mma_report(const std::filesystem::path& path, const SequenceEvaluation& eval);

struct MMACurve {
  std::vector<double> thresholds;
  std::vector<double> fractions;
};

/// Accuracy-versus-threshold chart as an RGB PPM, one colour per curve.
void write_mma_plot(const std::filesystem::path& path, const std::vector<MMACurve>& curves,
                    int width = 480, int height = 360);

struct BenchStats {
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  std::size_t dim = 0;
  std::size_t warmup_runs = 0;
  std::vector<double> samples;  // seconds, one per timed run
  double median_seconds = 0.0;
  double min_seconds = 0.0;
  std::size_t matches = 0;
  unsigned threads = 1;
};

/// One untimed warm-up then `repeats` timed calls of match(). repeats >= 3.
BenchStats bench_match(const KeypointSet& a, const KeypointSet& b, std::size_t repeats,
                       MatchPolicy policy = MatchPolicy::kMutual, const MatchOptions& opts = {});

}  // namespace sfeat
