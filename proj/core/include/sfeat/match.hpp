#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sfeat/extract.hpp"

namespace sfeat {

enum class MatchPolicy { kNearest, kMutual };

/// "nn" or "mutual_nn"; throws ConfigError otherwise.
MatchPolicy parse_match_policy(const std::string& name);
std::string to_string(MatchPolicy policy);

struct Match {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;
};

using MatchSet = std::vector<Match>;

struct MatchOptions {
  /// Worker threads for the distance blocks; 1 runs on the calling thread.
  unsigned threads = 1;
};

/// Euclidean nearest neighbours of every row of a among the rows of b, ties
/// going to the lower index. Mutual keeps pairs that are each other's nearest.
/// Output is ordered by a-index.
MatchSet match(const KeypointSet& a, const KeypointSet& b, MatchPolicy policy,
               const MatchOptions& opts = {});

}  // namespace sfeat
