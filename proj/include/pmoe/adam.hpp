#pragma once

#include <vector>

#include "pmoe/matrix.hpp"
#include "pmoe/tensor.hpp"

namespace pmoe {

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Matrix m;
  Matrix v;
  long step = 0;
};

/// One bias-corrected Adam update of `param` in place.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamConfig& cfg);

/// Adam over a fixed list of leaf tensors. Each step reads the leaves'
/// accumulated grads, updates their values and clears the grads.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void step();
  void zero_grad();
  const std::vector<Tensor>& params() const noexcept { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  AdamConfig cfg_;
};

}  // namespace pmoe
