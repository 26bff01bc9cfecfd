#pragma once

#include <cstddef>
#include <filesystem>

#include "sfeat/graph.hpp"

namespace sfeat {

/// Channel covariance of x[C,H,W] with population normalization 1/HW:
/// (X - mu 1^T)(X - mu 1^T)^T / HW over X reshaped to [C,HW].
ad::Var covariance(ad::Var x);

/// Per-channel zero mean and unit population variance over the spatial
/// positions. Channels with standard deviation <= 1e-8 become zeros.
ad::Var standardize(ad::Var x);

/// X_s X_s^T / HW of a standardized map; a Pearson correlation matrix.
ad::Var standardized_covariance(ad::Var standardized);

/// |a - b| elementwise for two [C,C] matrices.
ad::Var covariance_difference(ad::Var first, ad::Var second);

/// Style/structure split of the strict upper triangle of a difference matrix.
/// Elements strictly above the mean are style; the rest are structure.
struct MaskPair {
  ad::Tensor style;      // [C,C] of 0/1
  ad::Tensor structure;  // [C,C] of 0/1
  double threshold = 0.0;
  std::size_t style_count = 0;
  std::size_t structure_count = 0;
};

/// Masks are plain tensors: no gradient ever flows through them.
MaskPair build_masks(const ad::Tensor& sigma_c);

struct CovLossOptions {
  bool use_style = true;      // suppress elements above the threshold
  bool use_structure = true;  // expand elements at or below it
};

/// mean(style-masked) + (1 - mean(structure-masked)). An empty mask
/// contributes 0 for its whole term; disabled terms are dropped.
ad::Var cov_loss(ad::Var sigma_c, const MaskPair& masks, CovLossOptions opts = {});

struct LossWeights {
  double reliability = 1.0;
  double repeatability = 1.0;
  double covariance = 2.0;

  void validate() const;
};

ad::Var total_loss(ad::Var reliability, ad::Var repeatability, ad::Var covariance,
                   const LossWeights& weights);

enum class CovarianceKind { kRaw, kStandardized, kDifference };

struct CovarianceMatrix {
  ad::Tensor values;
  CovarianceKind kind = CovarianceKind::kRaw;
};

/// Everything computed between two descriptor maps, without gradients.
struct CovarianceArtifacts {
  CovarianceMatrix first;       // standardized, image 1
  CovarianceMatrix second;      // standardized, image 2
  CovarianceMatrix difference;  // |first - second|
  MaskPair masks;
  double style_mean = 0.0;
  double structure_mean = 0.0;
};

CovarianceArtifacts covariance_artifacts(const ad::Tensor& first, const ad::Tensor& second);

/// Mean of values where mask is 1; 0 for an empty mask.
double masked_mean(const ad::Tensor& values, const ad::Tensor& mask);

/// Whitespace-separated rows with full double precision.
void write_matrix_text(const std::filesystem::path& path, const ad::Tensor& matrix);
/// 8-bit grayscale PGM, values mapped linearly from [lo, hi] to [0, 255].
void write_matrix_image(const std::filesystem::path& path, const ad::Tensor& matrix, double lo,
                        double hi, int cell_size = 8);

}  // namespace sfeat
