#include "pmoe/adam.hpp"

#include <cmath>

#include "pmoe/error.hpp"

namespace pmoe {

void adam_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamConfig& cfg) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw DimensionError("adam_step: grad " + grad.shape_string() + " vs param " +
                         param.shape_string());
  }
  if (state.m.empty() && param.size() != 0) {
    state.m = Matrix(param.rows(), param.cols());
    state.v = Matrix(param.rows(), param.cols());
  }
  if (state.m.rows() != param.rows() || state.m.cols() != param.cols()) {
    throw DimensionError("adam_step: state " + state.m.shape_string() + " vs param " +
                         param.shape_string());
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.data()[i];
    double& m = state.m.data()[i];
    double& v = state.v.data()[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    param.data()[i] -= cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

void Adam::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    adam_step(params_[k].mutable_value(), params_[k].grad(), states_[k], cfg_);
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace pmoe
