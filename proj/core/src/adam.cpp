#include "sfeat/adam.hpp"

#include <cmath>

#include "sfeat/error.hpp"

namespace sfeat {

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
}

void adam_step(const std::vector<ad::Tensor*>& params, const std::vector<ad::Tensor>& grads,
               OptimizerState& state, const AdamConfig& cfg) {
  cfg.validate();
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (state.first_moment.empty() && state.second_moment.empty()) {
    for (const ad::Tensor* p : params) {
      state.first_moment.emplace_back(p->shape, 0.0);
      state.second_moment.emplace_back(p->shape, 0.0);
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match the parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape != params[i]->shape || state.first_moment[i].shape != params[i]->shape ||
        state.second_moment[i].shape != params[i]->shape) {
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      throw NumericError("adam_step: non-finite gradient at parameter " + std::to_string(i));
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor& w = *params[i];
    ad::Tensor& m = state.first_moment[i];
    ad::Tensor& v = state.second_moment[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grads[i][k] + cfg.weight_decay * w[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      w[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

void adam_step(Network& net, const std::vector<ad::Tensor>& grads, OptimizerState& state,
               const AdamConfig& cfg) {
  std::vector<ad::Tensor*> params;
  for (auto& p : net.mutable_parameters()) params.push_back(&p.value);
  adam_step(params, grads, state, cfg);
}

}  // namespace sfeat
