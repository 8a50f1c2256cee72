#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ltn/autodiff.hpp"

namespace ltn::ad {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates, one pair per parameter, plus the step count.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

/// One Adam update with bias correction. Weight decay enters as an additive
/// weight_decay * theta term on the gradient. A non-finite gradient aborts
/// the step before anything is modified.
void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
               double weight_decay, const AdamConfig& cfg = {});

}  // namespace ltn::ad
