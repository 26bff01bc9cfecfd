#pragma once

#include <array>
#include <optional>

#include <Eigen/Core>

#include "sfeat/tensor.hpp"

namespace sfeat {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Planar projective transform, stored with h(2,2) == 1.
class Homography {
 public:
  Homography();

  /// Normalizes by h(2,2). Throws NumericError if h(2,2) vanishes or the
  /// matrix is singular (|det| <= 1e-12 after normalization).
  static Homography from_matrix(const Eigen::Matrix3d& h);
  static Homography from_row_major(const std::array<double, 9>& values);
  static Homography translation(double tx, double ty);
  /// Maps the four src points onto dst (direct linear solve).
  static Homography from_four_points(const std::array<Point2, 4>& src,
                                     const std::array<Point2, 4>& dst);

  const Eigen::Matrix3d& matrix() const { return h_; }
  std::array<double, 9> row_major() const;

  Homography inverse() const;
  /// this * inner: applies inner first.
  Homography compose(const Homography& inner) const;

  /// Throws NumericError when the point maps to infinity.
  Point2 apply(Point2 p) const;
  /// nullopt when |h3 . p| <= 1e-12.
  std::optional<Point2> try_apply(Point2 p) const;

 private:
  explicit Homography(const Eigen::Matrix3d& normalized) : h_(normalized) {}
  Eigen::Matrix3d h_;
};

/// Dense ground-truth mapping from a source grid into a target image.
struct CorrespondenceMap {
  std::size_t height = 0;
  std::size_t width = 0;
  ad::Tensor coords;  // [H,W,2] target (u, v) per source pixel (row i, column j)
  ad::Tensor valid;   // [H,W] 1 where (u, v) lies inside the target

  Point2 target(std::size_t i, std::size_t j) const {
    const std::size_t k = (i * width + j) * 2;
    return {coords[k], coords[k + 1]};
  }
  bool is_valid(std::size_t i, std::size_t j) const { return valid[i * width + j] != 0.0; }
  std::size_t valid_count() const;
};

/// T(i,j) = H (j, i). Valid iff the mapped point is finite and lies inside
/// [0, target_w-1] x [0, target_h-1].
CorrespondenceMap build_correspondence_map(const Homography& h, std::size_t height,
                                           std::size_t width, std::size_t target_height,
                                           std::size_t target_width);

}  // namespace sfeat
