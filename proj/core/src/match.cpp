#include "sfeat/match.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <utility>
#include <vector>

#include "sfeat/error.hpp"

namespace sfeat {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr Eigen::Index kBlockRows = 256;

// Float distances only screen candidates: every pair within `tol` of the
// float minimum is re-ranked in double precision, so near-ties resolve the
// same way as an exact computation would.
struct Candidate {
  float d2;
  std::size_t index;
};

struct Best {
  float d2 = std::numeric_limits<float>::infinity();
  std::vector<Candidate> near;

  void offer(float d2_new, std::size_t index, float tol) {
    if (d2_new > d2 + tol) return;
    if (d2_new + tol < d2) near.clear();
    d2 = std::min(d2, d2_new);
    near.push_back({d2_new, index});
  }
  void merge(const Best& other, float tol) {
    for (const Candidate& c : other.near) offer(c.d2, c.index, tol);
  }
};

/// Nearest b for each row in [begin, end) of a, plus the nearest row of that
/// range for every b.
void scan_rows(const Eigen::Map<const RowMatrix>& a, const Eigen::Map<const RowMatrix>& b,
               const Eigen::VectorXf& a_sq, const Eigen::VectorXf& b_sq, Eigen::Index begin,
               Eigen::Index end, float tol, std::vector<Best>& row_best, std::vector<Best>& col_best) {
  Eigen::MatrixXf dots;
  std::vector<float> d2(static_cast<std::size_t>(b.rows()));
  for (Eigen::Index r0 = begin; r0 < end; r0 += kBlockRows) {
    const Eigen::Index nr = std::min(kBlockRows, end - r0);
    // Column-major block: one column per b row keeps the col scan contiguous.
    dots.noalias() = b * a.middleRows(r0, nr).transpose();
    for (Eigen::Index i = 0; i < nr; ++i) {
      const float* col = dots.col(i).data();
      const float ai = a_sq[r0 + i];
      float row_min = std::numeric_limits<float>::infinity();
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        const float v = ai + b_sq[j] - 2.0f * col[j];
        d2[static_cast<std::size_t>(j)] = v;
        row_min = std::min(row_min, v);
        Best& cb = col_best[static_cast<std::size_t>(j)];
        if (v <= cb.d2 + tol) cb.offer(v, static_cast<std::size_t>(r0 + i), tol);
      }
      Best& rb = row_best[static_cast<std::size_t>(r0 + i)];
      for (std::size_t j = 0; j < d2.size(); ++j) {
        if (d2[j] <= row_min + tol) rb.offer(d2[j], j, tol);
      }
    }
  }
}

double exact_distance(const KeypointSet& a, std::size_t i, const KeypointSet& b, std::size_t j) {
  double s = 0.0;
  const float* x = a.row(i);
  const float* y = b.row(j);
  for (std::size_t k = 0; k < a.dim; ++k) {
    const double d = static_cast<double>(x[k]) - y[k];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Exact winner among the screened candidates; ties go to the lower index.
/// `distance(c)` measures candidate index c.
template <typename Distance>
std::pair<std::size_t, double> refine(const Best& best, float tol, const Distance& distance) {
  std::size_t winner = std::numeric_limits<std::size_t>::max();
  double winner_d = std::numeric_limits<double>::infinity();
  for (const Candidate& c : best.near) {
    if (c.d2 > best.d2 + tol) continue;
    const double d = distance(c.index);
    if (d < winner_d || (d == winner_d && c.index < winner)) {
      winner = c.index;
      winner_d = d;
    }
  }
  return {winner, winner_d};
}

}  // namespace

MatchPolicy parse_match_policy(const std::string& name) {
  if (name == "nn") return MatchPolicy::kNearest;
  if (name == "mutual_nn") return MatchPolicy::kMutual;
  throw ConfigError("unknown match policy '" + name + "' (expected nn or mutual_nn)");
}

std::string to_string(MatchPolicy policy) {
  return policy == MatchPolicy::kNearest ? "nn" : "mutual_nn";
}

MatchSet match(const KeypointSet& a, const KeypointSet& b, MatchPolicy policy,
               const MatchOptions& opts) {
  if (a.empty() || b.empty()) return {};
  if (a.dim != b.dim) {
    throw ShapeError("descriptor dims differ: " + std::to_string(a.dim) + " vs " +
                     std::to_string(b.dim));
  }
  const auto na = static_cast<Eigen::Index>(a.size());
  const auto nb = static_cast<Eigen::Index>(b.size());
  const auto dim = static_cast<Eigen::Index>(a.dim);
  const Eigen::Map<const RowMatrix> ma(a.descriptors.data(), na, dim);
  const Eigen::Map<const RowMatrix> mb(b.descriptors.data(), nb, dim);
  const Eigen::VectorXf a_sq = ma.rowwise().squaredNorm();
  const Eigen::VectorXf b_sq = mb.rowwise().squaredNorm();
  // Bound on the float rounding of |a|^2 + |b|^2 - 2 a.b, with headroom.
  const float tol = 4.0f * static_cast<float>(dim + 2) * std::numeric_limits<float>::epsilon() *
                    (a_sq.maxCoeff() + b_sq.maxCoeff());

  std::vector<Best> row_best(a.size());
  std::vector<Best> col_best(b.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(
                                                                             (na + kBlockRows - 1) / kBlockRows)));
  if (threads == 1) {
    scan_rows(ma, mb, a_sq, b_sq, 0, na, tol, row_best, col_best);
  } else {
    // Each worker owns a contiguous row range and its own column candidates,
    // merged afterwards.
    std::vector<std::vector<Best>> partial(threads, std::vector<Best>(b.size()));
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (na + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const Eigen::Index begin = std::min(na, chunk * t);
      const Eigen::Index end = std::min(na, begin + chunk);
      pool.emplace_back([&, t, begin, end] {
        scan_rows(ma, mb, a_sq, b_sq, begin, end, tol, row_best, partial[t]);
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& part : partial) {
      for (std::size_t j = 0; j < b.size(); ++j) col_best[j].merge(part[j], tol);
    }
  }

  MatchSet out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto [j, d] = refine(row_best[i], tol, [&](std::size_t c) { return exact_distance(a, i, b, c); });
    if (policy == MatchPolicy::kMutual) {
      const std::size_t back =
          refine(col_best[j], tol, [&](std::size_t c) { return exact_distance(a, c, b, j); }).first;
      if (back != i) continue;
    }
    out.push_back({i, j, d});
  }
  return out;
}

}  // namespace sfeat
