#include "sfeat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "sfeat/error.hpp"

namespace sfeat::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;

Tensor* grad_of(Graph& g, const Var& v) {
  return g.requires_grad(v.id()) ? &g.grad_buffer(v.id()) : nullptr;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  const Tensor& in = x.value();
  Tensor out(in.shape);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return x.graph().record(std::move(out), {x}, [x, deriv](Graph& g, const Tensor& gout, const Tensor&) {
    Tensor* gx = grad_of(g, x);
    if (!gx) return;
    const Tensor& in = g.value(x.id());
    for (std::size_t i = 0; i < in.size(); ++i) (*gx)[i] += gout[i] * deriv(in[i]);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

struct ReducePlan {
  Shape out_shape;
  std::vector<std::size_t> out_index;  // per input element
  std::size_t group_size = 1;
};

ReducePlan plan_reduction(const Shape& shape, std::vector<std::size_t> axes) {
  const std::size_t nd = shape.size();
  if (axes.empty()) {
    axes.resize(nd);
    std::iota(axes.begin(), axes.end(), std::size_t{0});
  }
  std::vector<bool> reduced(nd, false);
  for (std::size_t a : axes) {
    if (a >= nd || reduced[a]) {
      throw ShapeError("reduction axis " + std::to_string(a) + " invalid for shape " +
                       shape_string(shape));
    }
    reduced[a] = true;
  }
  ReducePlan plan;
  for (std::size_t d = 0; d < nd; ++d) {
    if (reduced[d]) {
      plan.group_size *= shape[d];
    } else {
      plan.out_shape.push_back(shape[d]);
    }
  }
  const std::size_t n = numel(shape);
  plan.out_index.resize(n);
  std::vector<std::size_t> idx(nd, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < nd; ++d) {
      if (!reduced[d]) o = o * shape[d] + idx[d];
    }
    plan.out_index[flat] = o;
    for (std::size_t d = nd; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return plan;
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Var square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(x, stable_sigmoid, [](double v) {
    const double s = stable_sigmoid(v);
    return s * (1.0 - s);
  });
}

Var abs(Var x) {
  return unary(x, [](double v) { return std::fabs(v); },
               [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var scale(Var x, double factor) {
  return unary(x, [factor](double v) { return factor * v; },
               [factor](double) { return factor; });
}

Var shift(Var x, double offset) {
  return unary(x, [offset](double v) { return v + offset; }, [](double) { return 1.0; });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& gout, const Tensor&) {
    if (Tensor* ga = grad_of(g, a)) {
      for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i];
    }
    if (Tensor* gb = grad_of(g, b)) {
      for (std::size_t i = 0; i < gout.size(); ++i) (*gb)[i] += gout[i];
    }
  });
}

Var subtract(Var a, Var b) {
  require_same_shape(a, b, "subtract");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& gout, const Tensor&) {
    if (Tensor* ga = grad_of(g, a)) {
      for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i];
    }
    if (Tensor* gb = grad_of(g, b)) {
      for (std::size_t i = 0; i < gout.size(); ++i) (*gb)[i] -= gout[i];
    }
  });
}

Var multiply(Var a, Var b) {
  require_same_shape(a, b, "multiply");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& gout, const Tensor&) {
    const Tensor& av = g.value(a.id());
    const Tensor& bv = g.value(b.id());
    if (Tensor* ga = grad_of(g, a)) {
      for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i] * bv[i];
    }
    if (Tensor* gb = grad_of(g, b)) {
      for (std::size_t i = 0; i < gout.size(); ++i) (*gb)[i] += gout[i] * av[i];
    }
  });
}

// ---- reductions ------------------------------------------------------------

Var sum(Var x, std::vector<std::size_t> axes) {
  ReducePlan plan = plan_reduction(x.shape(), std::move(axes));
  const Tensor& in = x.value();
  Tensor out(plan.out_shape, 0.0);
  for (std::size_t i = 0; i < in.size(); ++i) out[plan.out_index[i]] += in[i];
  return x.graph().record(std::move(out), {x},
                          [x, idx = std::move(plan.out_index)](Graph& g, const Tensor& gout, const Tensor&) {
                            Tensor* gx = grad_of(g, x);
                            if (!gx) return;
                            for (std::size_t i = 0; i < idx.size(); ++i) (*gx)[i] += gout[idx[i]];
                          });
}

Var mean(Var x, std::vector<std::size_t> axes) {
  ReducePlan plan = plan_reduction(x.shape(), std::move(axes));
  const double inv = plan.group_size ? 1.0 / static_cast<double>(plan.group_size) : 0.0;
  const Tensor& in = x.value();
  Tensor out(plan.out_shape, 0.0);
  for (std::size_t i = 0; i < in.size(); ++i) out[plan.out_index[i]] += in[i];
  for (double& v : out.data) v *= inv;
  return x.graph().record(
      std::move(out), {x}, [x, inv, idx = std::move(plan.out_index)](Graph& g, const Tensor& gout, const Tensor&) {
        Tensor* gx = grad_of(g, x);
        if (!gx) return;
        for (std::size_t i = 0; i < idx.size(); ++i) (*gx)[i] += gout[idx[i]] * inv;
      });
}

Var max(Var x, std::vector<std::size_t> axes) {
  ReducePlan plan = plan_reduction(x.shape(), std::move(axes));
  const Tensor& in = x.value();
  if (in.size() == 0) throw ShapeError("max over empty tensor");
  Tensor out(plan.out_shape, 0.0);
  std::vector<std::size_t> arg(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t o = plan.out_index[i];
    if (arg[o] == in.size() || in[i] > out[o]) {
      out[o] = in[i];
      arg[o] = i;
    }
  }
  return x.graph().record(std::move(out), {x}, [x, arg = std::move(arg)](Graph& g, const Tensor& gout, const Tensor&) {
    Tensor* gx = grad_of(g, x);
    if (!gx) return;
    for (std::size_t o = 0; o < arg.size(); ++o) (*gx)[arg[o]] += gout[o];
  });
}

// ---- normalization ---------------------------------------------------------

Var l2_normalize(Var x, double eps) {
  const Tensor& in = x.value();
  if (in.ndim() < 1 || in.dim(0) == 0) throw ShapeError("l2_normalize needs a channel axis");
  const std::size_t c = in.dim(0);
  const std::size_t p = in.size() / c;
  Tensor out(in.shape);
  std::vector<double> norms(p, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < p; ++j) norms[j] += in[k * p + j] * in[k * p + j];
  }
  for (double& n : norms) n = std::sqrt(n);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < p; ++j) out[k * p + j] = in[k * p + j] / std::max(norms[j], eps);
  }
  return x.graph().record(
      std::move(out), {x},
      [x, c, p, eps, norms = std::move(norms)](Graph& g, const Tensor& gout, const Tensor& yv) {
        Tensor* gx = grad_of(g, x);
        if (!gx) return;
        for (std::size_t j = 0; j < p; ++j) {
          if (norms[j] > eps) {
            double dot = 0.0;
            for (std::size_t k = 0; k < c; ++k) dot += yv[k * p + j] * gout[k * p + j];
            for (std::size_t k = 0; k < c; ++k) {
              (*gx)[k * p + j] += (gout[k * p + j] - yv[k * p + j] * dot) / norms[j];
            }
          } else {
            for (std::size_t k = 0; k < c; ++k) (*gx)[k * p + j] += gout[k * p + j] / eps;
          }
        }
      });
}

// ---- linear algebra and layout ---------------------------------------------

Var matmul(Var a, Var b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(sa) + " x " + shape_string(sb));
  }
  const auto m = static_cast<Eigen::Index>(sa[0]);
  const auto k = static_cast<Eigen::Index>(sa[1]);
  const auto n = static_cast<Eigen::Index>(sb[1]);
  Tensor out(Shape{sa[0], sb[1]});
  MatMap(out.data.data(), m, n).noalias() =
      ConstMatMap(a.value().data.data(), m, k) * ConstMatMap(b.value().data.data(), k, n);
  return a.graph().record(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, const Tensor& gout, const Tensor&) {
    ConstMatMap go(gout.data.data(), m, n);
    if (Tensor* ga = grad_of(g, a)) {
      MatMap(ga->data.data(), m, k).noalias() +=
          go * ConstMatMap(g.value(b.id()).data.data(), k, n).transpose();
    }
    if (Tensor* gb = grad_of(g, b)) {
      MatMap(gb->data.data(), k, n).noalias() +=
          ConstMatMap(g.value(a.id()).data.data(), m, k).transpose() * go;
    }
  });
}

Var transpose(Var a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("transpose expects a matrix, got " + shape_string(s));
  const std::size_t m = s[0];
  const std::size_t n = s[1];
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  }
  return a.graph().record(std::move(out), {a}, [a, m, n](Graph& g, const Tensor& gout, const Tensor&) {
    Tensor* ga = grad_of(g, a);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += gout[j * m + i];
    }
  });
}

Var reshape(Var x, Shape shape) {
  if (numel(shape) != x.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  }
  Tensor out(std::move(shape), x.value().data);
  return x.graph().record(std::move(out), {x}, [x](Graph& g, const Tensor& gout, const Tensor&) {
    Tensor* gx = grad_of(g, x);
    if (!gx) return;
    for (std::size_t i = 0; i < gout.size(); ++i) (*gx)[i] += gout[i];
  });
}

Var select_channel(Var x, std::size_t c) {
  const Shape& s = x.shape();
  if (s.size() != 3 || c >= s[0]) {
    throw ShapeError("select_channel: channel " + std::to_string(c) + " of " + shape_string(s));
  }
  const std::size_t plane = s[1] * s[2];
  Tensor out(Shape{1, s[1], s[2]});
  std::copy_n(x.value().data.begin() + static_cast<std::ptrdiff_t>(c * plane), plane,
              out.data.begin());
  return x.graph().record(std::move(out), {x}, [x, c, plane](Graph& g, const Tensor& gout, const Tensor&) {
    Tensor* gx = grad_of(g, x);
    if (!gx) return;
    for (std::size_t i = 0; i < plane; ++i) (*gx)[c * plane + i] += gout[i];
  });
}

namespace {

struct BilinearTap {
  std::size_t idx[4] = {0, 0, 0, 0};
  double w[4] = {0, 0, 0, 0};
  bool inside = false;
};

BilinearTap bilinear_tap(double x, double y, std::size_t h, std::size_t w) {
  BilinearTap tap;
  if (!(x >= 0.0 && y >= 0.0 && x <= static_cast<double>(w - 1) &&
        y <= static_cast<double>(h - 1))) {
    return tap;
  }
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  tap.idx[0] = y0 * w + x0;
  tap.idx[1] = y0 * w + x1;
  tap.idx[2] = y1 * w + x0;
  tap.idx[3] = y1 * w + x1;
  tap.w[0] = (1.0 - fx) * (1.0 - fy);
  tap.w[1] = fx * (1.0 - fy);
  tap.w[2] = (1.0 - fx) * fy;
  tap.w[3] = fx * fy;
  tap.inside = true;
  return tap;
}

}  // namespace

Var sample_bilinear(Var x, const std::vector<SamplePoint>& points) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("sample_bilinear expects [C,H,W], got " + shape_string(s));
  const std::size_t c = s[0];
  const std::size_t h = s[1];
  const std::size_t w = s[2];
  const std::size_t np = points.size();
  std::vector<BilinearTap> taps(np);
  for (std::size_t i = 0; i < np; ++i) taps[i] = bilinear_tap(points[i].x, points[i].y, h, w);
  const Tensor& in = x.value();
  Tensor out(Shape{c, np}, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    const double* plane = in.data.data() + k * h * w;
    for (std::size_t i = 0; i < np; ++i) {
      const BilinearTap& t = taps[i];
      if (!t.inside) continue;
      double v = 0.0;
      for (int q = 0; q < 4; ++q) {
        if (t.w[q] != 0.0) v += t.w[q] * plane[t.idx[q]];
      }
      out[k * np + i] = v;
    }
  }
  return x.graph().record(std::move(out), {x},
                          [x, c, h, w, np, taps = std::move(taps)](Graph& g, const Tensor& gout, const Tensor&) {
                            Tensor* gx = grad_of(g, x);
                            if (!gx) return;
                            for (std::size_t k = 0; k < c; ++k) {
                              double* plane = gx->data.data() + k * h * w;
                              for (std::size_t i = 0; i < np; ++i) {
                                const BilinearTap& t = taps[i];
                                if (!t.inside) continue;
                                for (int q = 0; q < 4; ++q) plane[t.idx[q]] += t.w[q] * gout[k * np + i];
                              }
                            }
                          });
}

Var column_distance(Var a, Var b, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[0] != sb[0]) {
    throw ShapeError("column_distance: incompatible shapes " + shape_string(sa) + " and " +
                     shape_string(sb));
  }
  const std::size_t c = sa[0];
  const std::size_t pa = sa[1];
  const std::size_t pb = sb[1];
  for (const auto& [i, j] : pairs) {
    if (i >= pa || j >= pb) throw ShapeError("column_distance: pair index out of range");
  }
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(Shape{pairs.size()});
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto [i, j] = pairs[n];
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = av[k * pa + i] - bv[k * pb + j];
      acc += d * d;
    }
    out[n] = std::sqrt(acc + 1e-12);
  }
  return a.graph().record(std::move(out), {a, b}, [a, b, c, pa, pb, pairs](Graph& g, const Tensor& gout, const Tensor&) {
    const Tensor& av = g.value(a.id());
    const Tensor& bv = g.value(b.id());
    Tensor* ga = grad_of(g, a);
    Tensor* gb = grad_of(g, b);
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      const auto [i, j] = pairs[n];
      double acc = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = av[k * pa + i] - bv[k * pb + j];
        acc += d * d;
      }
      const double coef = gout[n] / std::sqrt(acc + 1e-12);
      for (std::size_t k = 0; k < c; ++k) {
        const double d = (av[k * pa + i] - bv[k * pb + j]) * coef;
        if (ga) (*ga)[k * pa + i] += d;
        if (gb) (*gb)[k * pb + j] -= d;
      }
    }
  });
}

Var extract_patches(Var x, std::size_t n) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] != 1) throw ShapeError("extract_patches expects [1,H,W], got " + shape_string(s));
  if (n < 1) throw ShapeError("extract_patches: patch size must be positive");
  const std::size_t h = s[1];
  const std::size_t w = s[2];
  const std::size_t ny = h / n;
  const std::size_t nx = w / n;
  const std::size_t np = ny * nx;
  const std::size_t nn = n * n;
  std::vector<std::size_t> src(np * nn);
  for (std::size_t py = 0; py < ny; ++py) {
    for (std::size_t px = 0; px < nx; ++px) {
      const std::size_t p = py * nx + px;
      for (std::size_t dy = 0; dy < n; ++dy) {
        for (std::size_t dx = 0; dx < n; ++dx) {
          src[p * nn + dy * n + dx] = (py * n + dy) * w + px * n + dx;
        }
      }
    }
  }
  Tensor out(Shape{np, nn});
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = x.value()[src[i]];
  return x.graph().record(std::move(out), {x}, [x, src = std::move(src)](Graph& g, const Tensor& gout, const Tensor&) {
    Tensor* gx = grad_of(g, x);
    if (!gx) return;
    for (std::size_t i = 0; i < src.size(); ++i) (*gx)[src[i]] += gout[i];
  });
}

}  // namespace sfeat::ad
