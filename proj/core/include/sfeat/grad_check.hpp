#pragma once

#include <functional>
#include <vector>

#include "sfeat/graph.hpp"

namespace sfeat::ad {

/// Builds an op inside a fresh graph from leaf inputs. Non-scalar results are
/// projected to a scalar by grad_check with fixed pseudo-random weights.
using OpBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckOptions {
  /// Central-difference step is step_scale * max(1, |x_i|).
  double step_scale = 1e-4;
  /// Seed of the projection weights for non-scalar outputs.
  unsigned projection_seed = 7;
  /// Lower bound of the relative-error denominator. Gradients smaller than
  /// this are compared in absolute terms, below the difference noise floor.
  double denominator_floor = 1e-6;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients against (f(x+h) - f(x-h)) / 2h for every
/// coordinate of every input.
GradCheckResult grad_check(const OpBuilder& op, const std::vector<Tensor>& point,
                           GradCheckOptions opts = {});

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

}  // namespace sfeat::ad
