#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sfeat/graph.hpp"

namespace sfeat::ad {

// ---- convolution -----------------------------------------------------------

struct ConvOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

/// Cross-correlation of input[C_in,H,W] with kernel[C_out,C_in,k,k], k odd.
/// Output size (H + 2p - d(k-1) - 1)/s + 1 must divide exactly.
Var conv2d(Var input, Var kernel, ConvOptions opts = {});

/// Per-channel spatial convolution, kernel[C,1,k,k], same padding.
Var depthwise_conv2d(Var input, Var kernel, int dilation = 1);

/// Depthwise stage followed by a 1x1 channel-mixing conv
/// pointwise_kernel[C_out,C_in,1,1]. Spatial size is preserved.
Var depthwise_separable_conv(Var input, Var depthwise_kernel, Var pointwise_kernel,
                             int dilation = 1);

/// Adds bias[C] to every pixel of x[C,...].
Var add_channel_bias(Var x, Var bias);

// ---- normalization ---------------------------------------------------------

inline constexpr double kNormEpsilon = 1e-8;

/// Normalizes x[C,...] along dim 0 for every trailing index. Vectors with
/// norm below eps are divided by eps instead, so zeros stay zeros.
Var l2_normalize(Var x, double eps = kNormEpsilon);

// ---- elementwise -----------------------------------------------------------

Var square(Var x);
Var relu(Var x);
Var sigmoid(Var x);
/// Subgradient 0 at 0.
Var abs(Var x);
Var scale(Var x, double factor);
Var shift(Var x, double offset);

Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);

// ---- reductions ------------------------------------------------------------

/// Reductions drop the reduced axes. An empty axis list reduces everything to
/// a rank-0 scalar.
Var sum(Var x, std::vector<std::size_t> axes = {});
Var mean(Var x, std::vector<std::size_t> axes = {});
/// Backward routes the gradient to the first maximal element in row-major
/// order within each reduced group.
Var max(Var x, std::vector<std::size_t> axes = {});

// ---- linear algebra and layout ---------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var x, Shape shape);
/// Channel c of x[C,H,W] as [1,H,W].
Var select_channel(Var x, std::size_t c);

/// Samples x[C,H,W] at sub-pixel points (x, y) with bilinear interpolation.
/// Result is [C,P]. Points outside [0,W-1]x[0,H-1] yield zeros. Gradients flow
/// into x only.
struct SamplePoint {
  double x = 0.0;
  double y = 0.0;
};
Var sample_bilinear(Var x, const std::vector<SamplePoint>& points);

/// Euclidean distances between columns a[:,i] and b[:,j] of a[C,P], b[C,Q],
/// one per (i, j) pair. sqrt(|a-b|^2 + 1e-12) keeps the gradient finite.
Var column_distance(Var a, Var b, const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

/// Non-overlapping NxN tiles of x[1,H,W] as rows of [P, N*N]; partial tiles at
/// the right and bottom border are dropped.
Var extract_patches(Var x, std::size_t n);

}  // namespace sfeat::ad
