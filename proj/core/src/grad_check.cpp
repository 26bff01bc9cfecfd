#include "sfeat/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sfeat/ops.hpp"

namespace sfeat::ad {
namespace {

Var scalarize(Graph& g, Var out, unsigned seed) {
  if (out.value().size() == 1) return reshape(out, Shape{});
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  Tensor weights(out.shape());
  for (double& w : weights.data) w = dist(rng);
  return sum(multiply(out, g.constant(std::move(weights))));
}

double evaluate(const OpBuilder& op, const std::vector<Tensor>& point, unsigned seed) {
  Graph g;
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (const Tensor& t : point) inputs.push_back(g.leaf(t, false));
  return scalarize(g, op(g, inputs), seed).value().item();
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const OpBuilder& op, const std::vector<Tensor>& point,
                           GradCheckOptions opts) {
  Graph g;
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (const Tensor& t : point) inputs.push_back(g.leaf(t, true));
  Var loss = scalarize(g, op(g, inputs), opts.projection_seed);
  g.backward(loss);

  GradCheckResult result;
  std::vector<Tensor> probe = point;
  for (std::size_t in = 0; in < point.size(); ++in) {
    const Tensor& analytic = inputs[in].grad();
    for (std::size_t i = 0; i < point[in].size(); ++i) {
      const double x = point[in][i];
      const double h = opts.step_scale * std::max(1.0, std::fabs(x));
      probe[in][i] = x + h;
      const double up = evaluate(op, probe, opts.projection_seed);
      probe[in][i] = x - h;
      const double down = evaluate(op, probe, opts.projection_seed);
      probe[in][i] = x;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[i], numeric, opts.denominator_floor);
      if (err > result.max_relative_error) {
        result = GradCheckResult{err, in, i, analytic[i], numeric};
      }
    }
  }
  return result;
}

}  // namespace sfeat::ad
