#include <algorithm>
#include <memory>

#include <Eigen/Core>

#include "sfeat/error.hpp"
#include "sfeat/ops.hpp"

namespace sfeat::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;
using Row = Eigen::Map<Eigen::VectorXd>;
using ConstRow = Eigen::Map<const Eigen::VectorXd>;

Tensor* grad_of(Graph& g, const Var& v) {
  return g.requires_grad(v.id()) ? &g.grad_buffer(v.id()) : nullptr;
}

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, k, h_out, w_out;
  long stride, pad, dil;
};

ConvGeometry conv_geometry(const Shape& in, const Shape& kernel, const ConvOptions& o) {
  if (in.size() != 3) throw ShapeError("conv2d input must be [C,H,W], got " + shape_string(in));
  if (kernel.size() != 4) {
    throw ShapeError("conv2d kernel must be [C_out,C_in,k,k], got " + shape_string(kernel));
  }
  if (kernel[1] != in[0]) {
    throw ShapeError("conv2d: input has " + std::to_string(in[0]) + " channels, kernel expects " +
                     std::to_string(kernel[1]));
  }
  if (kernel[2] != kernel[3] || kernel[2] % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + shape_string(kernel));
  }
  if (o.stride < 1 || o.padding < 0 || o.dilation < 1) {
    throw ShapeError("conv2d: stride and dilation must be >= 1, padding >= 0");
  }
  ConvGeometry g{};
  g.c_in = in[0];
  g.h = in[1];
  g.w = in[2];
  g.c_out = kernel[0];
  g.k = kernel[2];
  g.stride = o.stride;
  g.pad = o.padding;
  g.dil = o.dilation;
  const long span = g.dil * static_cast<long>(g.k - 1) + 1;
  const long eh = static_cast<long>(g.h) + 2 * g.pad - span;
  const long ew = static_cast<long>(g.w) + 2 * g.pad - span;
  if (eh < 0 || ew < 0) throw ShapeError("conv2d: kernel larger than padded input");
  if (eh % g.stride != 0 || ew % g.stride != 0) {
    throw ShapeError("conv2d: output size is not an exact integer for stride " +
                     std::to_string(g.stride));
  }
  g.h_out = static_cast<std::size_t>(eh / g.stride + 1);
  g.w_out = static_cast<std::size_t>(ew / g.stride + 1);
  return g;
}

// cols[(ci*k + ky)*k + kx][oy*w_out + ox]
void im2col(const ConvGeometry& g, const double* in, double* cols) {
  const std::size_t n_out = g.h_out * g.w_out;
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    const double* plane = in + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((ci * g.k + ky) * g.k + kx) * n_out;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky) * g.dil;
          double* dst = row + oy * g.w_out;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill_n(dst, g.w_out, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx) * g.dil;
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* in_grad) {
  const std::size_t n_out = g.h_out * g.w_out;
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    double* plane = in_grad + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((ci * g.k + ky) * g.k + kx) * n_out;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky) * g.dil;
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const double* src = row + oy * g.w_out;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx) * g.dil;
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var input, Var kernel, ConvOptions opts) {
  const ConvGeometry geo = conv_geometry(input.shape(), kernel.shape(), opts);
  const auto rows = static_cast<Eigen::Index>(geo.c_in * geo.k * geo.k);
  const auto n_out = static_cast<Eigen::Index>(geo.h_out * geo.w_out);
  const auto c_out = static_cast<Eigen::Index>(geo.c_out);

  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * n_out));
  im2col(geo, input.value().data.data(), cols->data());

  Tensor out(Shape{geo.c_out, geo.h_out, geo.w_out});
  MatMap(out.data.data(), c_out, n_out).noalias() =
      ConstMatMap(kernel.value().data.data(), c_out, rows) * ConstMatMap(cols->data(), rows, n_out);

  if (!kernel.requires_grad()) cols.reset();
  return input.graph().record(
      std::move(out), {input, kernel},
      [input, kernel, geo, rows, n_out, c_out, cols](Graph& g, const Tensor& gout, const Tensor&) {
        ConstMatMap go(gout.data.data(), c_out, n_out);
        if (Tensor* gk = grad_of(g, kernel)) {
          MatMap(gk->data.data(), c_out, rows).noalias() +=
              go * ConstMatMap(cols->data(), rows, n_out).transpose();
        }
        if (Tensor* gi = grad_of(g, input)) {
          RowMatrix gcols =
              ConstMatMap(g.value(kernel.id()).data.data(), c_out, rows).transpose() * go;
          col2im_add(geo, gcols.data(), gi->data.data());
        }
      });
}

Var depthwise_conv2d(Var input, Var kernel, int dilation) {
  const Shape& si = input.shape();
  const Shape& sk = kernel.shape();
  if (si.size() != 3) throw ShapeError("depthwise_conv2d input must be [C,H,W]");
  if (sk.size() != 4 || sk[1] != 1 || sk[2] != sk[3] || sk[2] % 2 == 0) {
    throw ShapeError("depthwise kernel must be [C,1,k,k] with odd k, got " + shape_string(sk));
  }
  if (sk[0] != si[0]) {
    throw ShapeError("depthwise_conv2d: channel mismatch, input " + std::to_string(si[0]) +
                     " vs kernel " + std::to_string(sk[0]));
  }
  if (dilation < 1) throw ShapeError("depthwise_conv2d: dilation must be >= 1");
  const std::size_t c = si[0];
  const long h = static_cast<long>(si[1]);
  const long w = static_cast<long>(si[2]);
  const long k = static_cast<long>(sk[2]);
  const long d = dilation;
  const long pad = d * (k - 1) / 2;

  const Tensor& in = input.value();
  const Tensor& ker = kernel.value();
  Tensor out(si, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = in.data.data() + ch * h * w;
    const double* kk = ker.data.data() + ch * k * k;
    double* dst = out.data.data() + ch * h * w;
    for (long ky = 0; ky < k; ++ky) {
      for (long kx = 0; kx < k; ++kx) {
        const double wv = kk[ky * k + kx];
        const long dy = ky * d - pad;
        const long dx = kx * d - pad;
        for (long y = std::max(0L, -dy); y < std::min(h, h - dy); ++y) {
          const double* srow = src + (y + dy) * w;
          double* drow = dst + y * w;
          for (long x = std::max(0L, -dx); x < std::min(w, w - dx); ++x) drow[x] += wv * srow[x + dx];
        }
      }
    }
  }
  return input.graph().record(
      std::move(out), {input, kernel},
      [input, kernel, c, h, w, k, d, pad](Graph& g, const Tensor& gout, const Tensor&) {
        Tensor* gi = grad_of(g, input);
        Tensor* gk = grad_of(g, kernel);
        const Tensor& in = g.value(input.id());
        const Tensor& ker = g.value(kernel.id());
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* src = in.data.data() + ch * h * w;
          const double* go = gout.data.data() + ch * h * w;
          for (long ky = 0; ky < k; ++ky) {
            for (long kx = 0; kx < k; ++kx) {
              const long dy = ky * d - pad;
              const long dx = kx * d - pad;
              const double wv = ker[ch * k * k + ky * k + kx];
              double acc = 0.0;
              const long x0 = std::max(0L, -dx);
              const long n = std::min(w, w - dx) - x0;
              if (n <= 0) continue;
              for (long y = std::max(0L, -dy); y < std::min(h, h - dy); ++y) {
                const ConstRow grow(go + y * w + x0, n);
                if (gk) acc += grow.dot(ConstRow(src + (y + dy) * w + x0 + dx, n));
                if (gi) Row(gi->data.data() + ch * h * w + (y + dy) * w + x0 + dx, n) += wv * grow;
              }
              if (gk) (*gk)[ch * k * k + ky * k + kx] += acc;
            }
          }
        }
      });
}

Var depthwise_separable_conv(Var input, Var depthwise_kernel, Var pointwise_kernel, int dilation) {
  const Shape& sp = pointwise_kernel.shape();
  if (sp.size() != 4 || sp[2] != 1 || sp[3] != 1) {
    throw ShapeError("pointwise kernel must be [C_out,C_in,1,1], got " + shape_string(sp));
  }
  Var spatial = depthwise_conv2d(input, depthwise_kernel, dilation);
  return conv2d(spatial, pointwise_kernel, ConvOptions{1, 0, 1});
}

Var add_channel_bias(Var x, Var bias) {
  const Shape& s = x.shape();
  if (s.empty() || bias.shape().size() != 1 || bias.shape()[0] != s[0]) {
    throw ShapeError("add_channel_bias: bias " + shape_string(bias.shape()) +
                     " does not match input " + shape_string(s));
  }
  const std::size_t c = s[0];
  const std::size_t plane = x.value().size() / c;
  Tensor out = x.value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double b = bias.value()[ch];
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] += b;
  }
  return x.graph().record(std::move(out), {x, bias},
                          [x, bias, c, plane](Graph& g, const Tensor& gout, const Tensor&) {
                            if (Tensor* gx = grad_of(g, x)) {
                              for (std::size_t i = 0; i < gout.size(); ++i) (*gx)[i] += gout[i];
                            }
                            if (Tensor* gb = grad_of(g, bias)) {
                              for (std::size_t ch = 0; ch < c; ++ch) {
                                double acc = 0.0;
                                for (std::size_t i = 0; i < plane; ++i) acc += gout[ch * plane + i];
                                (*gb)[ch] += acc;
                              }
                            }
                          });
}

}  // namespace sfeat::ad
