#include "ltn/optim.hpp"

#include <cmath>
#include <string>

namespace ltn::ad {

void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
               double weight_decay, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].shape() != params[p]->value.shape())
      throw ShapeError("adam_step: gradient shape mismatch for '" + params[p]->name + "'");
    if (!grads[p].all_finite()) throw DivergenceError("non-finite gradient for '" + params[p]->name + "'");
  }
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->value.shape(), 0.0);
      state.v.emplace_back(p->value.shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& theta = params[p]->value.values();
    auto& m = state.m[p].values();
    auto& v = state.v[p].values();
    const auto& g = grads[p].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] + weight_decay * theta[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

}  // namespace ltn::ad
