#include "sfeat/covariance_loss.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "sfeat/error.hpp"
#include "sfeat/image.hpp"
#include "sfeat/ops.hpp"

namespace sfeat {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr double kStdEpsilon = 1e-8;

struct MapDims {
  std::size_t c;
  std::size_t n;  // spatial positions
};

MapDims map_dims(const Var& x, const char* op) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError(std::string(op) + " expects [C,H,W], got " + ad::shape_string(s));
  const std::size_t n = s[1] * s[2];
  if (n < 2) throw ShapeError(std::string(op) + ": degenerate spatial size " + ad::shape_string(s));
  return {s[0], n};
}

Tensor* grad_of(Graph& g, const Var& v) {
  return g.requires_grad(v.id()) ? &g.grad_buffer(v.id()) : nullptr;
}

// Subtracts the per-row mean of a [C,N] matrix.
Var center_rows(Var x) {
  const std::size_t c = x.shape()[0];
  const std::size_t n = x.shape()[1];
  Tensor out = x.value();
  for (std::size_t k = 0; k < c; ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += out[k * n + i];
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[k * n + i] -= m;
  }
  return x.graph().record(std::move(out), {x}, [x, c, n](Graph& g, const Tensor& gout, const Tensor&) {
    Tensor* gx = grad_of(g, x);
    if (!gx) return;
    for (std::size_t k = 0; k < c; ++k) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += gout[k * n + i];
      m /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) (*gx)[k * n + i] += gout[k * n + i] - m;
    }
  });
}

}  // namespace

Var covariance(Var x) {
  const MapDims d = map_dims(x, "covariance");
  const Var centered = center_rows(ad::reshape(x, Shape{d.c, d.n}));
  return ad::scale(ad::matmul(centered, ad::transpose(centered)), 1.0 / static_cast<double>(d.n));
}

Var standardize(Var x) {
  const MapDims d = map_dims(x, "standardize");
  const Tensor& in = x.value();
  Tensor out(in.shape, 0.0);
  std::vector<double> sigma(d.c, 0.0);
  const double inv_n = 1.0 / static_cast<double>(d.n);
  for (std::size_t k = 0; k < d.c; ++k) {
    const double* row = in.data.data() + k * d.n;
    double m = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) m += row[i];
    m *= inv_n;
    double var = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) var += (row[i] - m) * (row[i] - m);
    sigma[k] = std::sqrt(var * inv_n);
    if (sigma[k] <= kStdEpsilon) continue;
    for (std::size_t i = 0; i < d.n; ++i) out[k * d.n + i] = (row[i] - m) / sigma[k];
  }
  return x.graph().record(
      std::move(out), {x},
      [x, d, inv_n, sigma = std::move(sigma)](Graph& g, const Tensor& gout, const Tensor& y) {
        Tensor* gx = grad_of(g, x);
        if (!gx) return;
        for (std::size_t k = 0; k < d.c; ++k) {
          if (sigma[k] <= kStdEpsilon) continue;
          double mean_g = 0.0;
          double mean_gy = 0.0;
          for (std::size_t i = 0; i < d.n; ++i) {
            mean_g += gout[k * d.n + i];
            mean_gy += gout[k * d.n + i] * y[k * d.n + i];
          }
          mean_g *= inv_n;
          mean_gy *= inv_n;
          for (std::size_t i = 0; i < d.n; ++i) {
            (*gx)[k * d.n + i] +=
                (gout[k * d.n + i] - mean_g - y[k * d.n + i] * mean_gy) / sigma[k];
          }
        }
      });
}

Var standardized_covariance(Var standardized) {
  const MapDims d = map_dims(standardized, "standardized_covariance");
  const Var flat = ad::reshape(standardized, Shape{d.c, d.n});
  return ad::scale(ad::matmul(flat, ad::transpose(flat)), 1.0 / static_cast<double>(d.n));
}

Var covariance_difference(Var first, Var second) {
  const Shape& a = first.shape();
  if (a.size() != 2 || a[0] != a[1] || a != second.shape()) {
    throw ShapeError("covariance_difference: expected equal square matrices, got " +
                     ad::shape_string(a) + " and " + ad::shape_string(second.shape()));
  }
  return ad::abs(ad::subtract(first, second));
}

MaskPair build_masks(const Tensor& sigma_c) {
  if (sigma_c.ndim() != 2 || sigma_c.dim(0) != sigma_c.dim(1)) {
    throw ShapeError("build_masks expects a square matrix, got " + ad::shape_string(sigma_c.shape));
  }
  const std::size_t c = sigma_c.dim(0);
  if (c < 2) throw ShapeError("build_masks needs C >= 2 for off-diagonal elements");
  double total = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i + 1; j < c; ++j) {
      const double v = sigma_c[i * c + j];
      total += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const std::size_t count = c * (c - 1) / 2;
  MaskPair masks;
  // The mean lies in [lo, hi]; clamping only removes summation rounding.
  masks.threshold = std::clamp(total / static_cast<double>(count), lo, hi);
  masks.style = Tensor(Shape{c, c}, 0.0);
  masks.structure = Tensor(Shape{c, c}, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i + 1; j < c; ++j) {
      if (sigma_c[i * c + j] > masks.threshold) {
        masks.style[i * c + j] = 1.0;
        ++masks.style_count;
      } else {
        masks.structure[i * c + j] = 1.0;
        ++masks.structure_count;
      }
    }
  }
  return masks;
}

Var cov_loss(Var sigma_c, const MaskPair& masks, CovLossOptions opts) {
  if (masks.style.shape != sigma_c.shape() || masks.structure.shape != sigma_c.shape()) {
    throw ShapeError("cov_loss: masks do not match " + ad::shape_string(sigma_c.shape()));
  }
  Graph& g = sigma_c.graph();
  Var loss;
  auto accumulate = [&loss](Var term) { loss = loss.valid() ? ad::add(loss, term) : term; };
  if (opts.use_style && masks.style_count > 0) {
    const Var masked = ad::multiply(sigma_c, g.constant(masks.style));
    accumulate(ad::scale(ad::sum(masked), 1.0 / static_cast<double>(masks.style_count)));
  }
  if (opts.use_structure && masks.structure_count > 0) {
    const Var masked = ad::multiply(sigma_c, g.constant(masks.structure));
    accumulate(ad::shift(
        ad::scale(ad::sum(masked), -1.0 / static_cast<double>(masks.structure_count)), 1.0));
  }
  return loss.valid() ? loss : g.constant(Tensor::scalar(0.0));
}

void LossWeights::validate() const {
  if (reliability < 0.0 || repeatability < 0.0 || covariance < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

Var total_loss(Var reliability, Var repeatability, Var covariance, const LossWeights& weights) {
  weights.validate();
  auto as_scalar = [](Var v, const char* name) {
    if (v.value().size() != 1) {
      throw ShapeError(std::string("total_loss: ") + name + " is not a scalar");
    }
    return v.shape().empty() ? v : ad::reshape(v, Shape{});
  };
  const Var a = ad::scale(as_scalar(reliability, "reliability"), weights.reliability);
  const Var b = ad::scale(as_scalar(repeatability, "repeatability"), weights.repeatability);
  const Var c = ad::scale(as_scalar(covariance, "covariance"), weights.covariance);
  return ad::add(ad::add(a, b), c);
}

double masked_mean(const Tensor& values, const Tensor& mask) {
  if (values.shape != mask.shape) throw ShapeError("masked_mean: shape mismatch");
  double total = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i] != 0.0) {
      total += values[i];
      count += 1.0;
    }
  }
  return count > 0.0 ? total / count : 0.0;
}

CovarianceArtifacts covariance_artifacts(const Tensor& first, const Tensor& second) {
  Graph g;
  const Var s1 = standardized_covariance(standardize(g.constant(first)));
  const Var s2 = standardized_covariance(standardize(g.constant(second)));
  const Var diff = covariance_difference(s1, s2);
  CovarianceArtifacts a;
  a.first = {s1.value(), CovarianceKind::kStandardized};
  a.second = {s2.value(), CovarianceKind::kStandardized};
  a.difference = {diff.value(), CovarianceKind::kDifference};
  a.masks = build_masks(diff.value());
  a.style_mean = masked_mean(diff.value(), a.masks.style);
  a.structure_mean = masked_mean(diff.value(), a.masks.structure);
  return a;
}

void write_matrix_text(const std::filesystem::path& path, const Tensor& matrix) {
  if (matrix.ndim() != 2) throw ShapeError("write_matrix_text expects a matrix");
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << std::setprecision(17);
  const std::size_t rows = matrix.dim(0);
  const std::size_t cols = matrix.dim(1);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) out << ' ';
      out << matrix[i * cols + j];
    }
    out << '\n';
  }
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

void write_matrix_image(const std::filesystem::path& path, const Tensor& matrix, double lo,
                        double hi, int cell_size) {
  if (matrix.ndim() != 2) throw ShapeError("write_matrix_image expects a matrix");
  if (cell_size < 1 || !(hi > lo)) throw ConfigError("write_matrix_image: bad range or cell size");
  const std::size_t rows = matrix.dim(0);
  const std::size_t cols = matrix.dim(1);
  const auto cs = static_cast<std::size_t>(cell_size);
  Image img(1, static_cast<int>(rows * cs), static_cast<int>(cols * cs));
  for (std::size_t i = 0; i < rows * cs; ++i) {
    for (std::size_t j = 0; j < cols * cs; ++j) {
      const double v = (matrix[(i / cs) * cols + j / cs] - lo) / (hi - lo);
      img.at(0, static_cast<int>(i), static_cast<int>(j)) = std::clamp(v, 0.0, 1.0);
    }
  }
  write_pnm(path, img);
}

}  // namespace sfeat
