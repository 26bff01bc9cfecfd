#include "sfeat/homography.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "sfeat/error.hpp"

namespace sfeat {
namespace {

constexpr double kDegenerate = 1e-12;

}  // namespace

Homography::Homography() : h_(Eigen::Matrix3d::Identity()) {}

Homography Homography::from_matrix(const Eigen::Matrix3d& h) {
  if (!h.allFinite()) throw NumericError("homography has non-finite entries");
  if (std::fabs(h(2, 2)) <= kDegenerate) {
    throw NumericError("homography with h33 = 0 cannot be normalized");
  }
  const Eigen::Matrix3d n = h / h(2, 2);
  if (std::fabs(n.determinant()) <= kDegenerate) throw NumericError("homography is not invertible");
  return Homography(n);
}

Homography Homography::from_row_major(const std::array<double, 9>& v) {
  Eigen::Matrix3d h;
  h << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  return from_matrix(h);
}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
  h(0, 2) = tx;
  h(1, 2) = ty;
  return Homography(h);
}

Homography Homography::from_four_points(const std::array<Point2, 4>& src,
                                        const std::array<Point2, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (!lu.isInvertible()) throw NumericError("degenerate point configuration for homography");
  const Eigen::Matrix<double, 8, 1> s = lu.solve(b);
  Eigen::Matrix3d h;
  h << s(0), s(1), s(2), s(3), s(4), s(5), s(6), s(7), 1.0;
  return from_matrix(h);
}

std::array<double, 9> Homography::row_major() const {
  std::array<double, 9> v{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v[r * 3 + c] = h_(r, c);
  }
  return v;
}

Homography Homography::inverse() const { return from_matrix(h_.inverse()); }

Homography Homography::compose(const Homography& inner) const { return from_matrix(h_ * inner.h_); }

std::optional<Point2> Homography::try_apply(Point2 p) const {
  const double w = h_(2, 0) * p.x + h_(2, 1) * p.y + h_(2, 2);
  if (std::fabs(w) <= kDegenerate) return std::nullopt;
  return Point2{(h_(0, 0) * p.x + h_(0, 1) * p.y + h_(0, 2)) / w,
                (h_(1, 0) * p.x + h_(1, 1) * p.y + h_(1, 2)) / w};
}

Point2 Homography::apply(Point2 p) const {
  const auto q = try_apply(p);
  if (!q) throw NumericError("point maps to infinity under homography");
  return *q;
}

std::size_t CorrespondenceMap::valid_count() const {
  std::size_t n = 0;
  for (double v : valid.data) n += v != 0.0;
  return n;
}

CorrespondenceMap build_correspondence_map(const Homography& h, std::size_t height,
                                           std::size_t width, std::size_t target_height,
                                           std::size_t target_width) {
  CorrespondenceMap t;
  t.height = height;
  t.width = width;
  t.coords = ad::Tensor(ad::Shape{height, width, 2}, 0.0);
  t.valid = ad::Tensor(ad::Shape{height, width}, 0.0);
  const double max_u = static_cast<double>(target_width) - 1.0;
  const double max_v = static_cast<double>(target_height) - 1.0;
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const auto q = h.try_apply({static_cast<double>(j), static_cast<double>(i)});
      if (!q || !std::isfinite(q->x) || !std::isfinite(q->y)) continue;
      const std::size_t k = (i * width + j) * 2;
      t.coords[k] = q->x;
      t.coords[k + 1] = q->y;
      if (q->x >= 0.0 && q->y >= 0.0 && q->x <= max_u && q->y <= max_v) t.valid[i * width + j] = 1.0;
    }
  }
  return t;
}

}  // namespace sfeat
