#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "sfeat/error.hpp"
#include "sfeat/graph.hpp"
#include "sfeat/homography.hpp"
#include "sfeat/ops.hpp"

namespace sfeat {

/// No anchor of the first image has a valid correspondence.
class EmptySupervisionError : public Error {
 public:
  using Error::Error;
};

struct RepeatabilityConfig {
  /// Side of the non-overlapping square patches.
  std::size_t patch_size = 16;
  /// Weight of the peakiness term relative to the similarity term.
  double peaky_weight = 1.0;

  void validate() const;
};

struct ReliabilityConfig {
  /// Negatives lie farther than this many pixels from the true match.
  double sample_radius = 8.0;
  std::size_t num_negatives = 64;
  /// AP level at which the reliability score no longer matters.
  double kappa = 0.5;
  /// Triangular distance bins over [0, 2].
  std::size_t num_bins = 25;
  /// Anchors are taken on a grid with this stride.
  std::size_t anchor_stride = 4;

  void validate() const;
};

/// R' resampled into the first image's frame through T; invalid pixels are 0
/// and flagged in `valid` ([1,H,W] of 0/1).
struct WarpedMap {
  ad::Var map;
  ad::Tensor valid;
};

WarpedMap warp_repeatability(ad::Var r_prime, const CorrespondenceMap& t);

struct RepeatabilityLoss {
  ad::Var total;   // cosim + peaky_weight * peaky
  ad::Var cosim;   // 1 - mean patch cosine similarity
  ad::Var peaky;   // 1 - mean patch (max - mean), averaged over both maps
  /// No patch had a valid pixel; every term is then 0.
  bool empty_support = false;
};

/// Patch cosine similarity between R and the warped R' plus peakiness. Masked
/// pixels are zeroed before the similarity; patches without valid pixels are
/// skipped, and only fully valid patches of the warped map enter peakiness.
RepeatabilityLoss repeatability_loss(ad::Var r, ad::Var r_warped, const ad::Tensor& valid,
                                     const RepeatabilityConfig& cfg);

/// Histogram-binned average precision of one positive per row against its
/// negatives. Distances are soft-assigned to triangular bins c_k = 2k/(Q-1);
/// AP = sum_k q_k(d+) / (1 + sum_{j<=k} negative mass in bin j).
/// d_pos is [A], d_neg is [A,K]; the result is [A] in [0,1].
ad::Var binned_ap(ad::Var d_pos, ad::Var d_neg, std::size_t num_bins, double max_distance = 2.0);

/// Anchor, true-match and negative locations for one pair.
struct ReliabilitySamples {
  std::vector<ad::SamplePoint> anchors;    // first image, integer pixels
  std::vector<ad::SamplePoint> positives;  // second image, sub-pixel T(anchor)
  std::vector<ad::SamplePoint> negatives;  // second image, num_negatives per anchor
  std::size_t negatives_per_anchor = 0;
};

/// Throws EmptySupervisionError when no grid anchor has a valid match.
ReliabilitySamples sample_reliability_points(const CorrespondenceMap& t, std::size_t target_height,
                                             std::size_t target_width, const ReliabilityConfig& cfg,
                                             std::mt19937_64& rng);

struct ReliabilityLoss {
  ad::Var loss;  // mean over anchors of 1 - (AP * S + kappa * (1 - S))
  ad::Var ap;    // [A]
};

ReliabilityLoss reliability_loss(ad::Var x1, ad::Var x2, ad::Var s1, const ReliabilitySamples& samples,
                                 const ReliabilityConfig& cfg);

ReliabilityLoss reliability_loss(ad::Var x1, ad::Var x2, ad::Var s1, const CorrespondenceMap& t,
                                 const ReliabilityConfig& cfg, std::mt19937_64& rng);

}  // namespace sfeat
