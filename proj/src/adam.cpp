#include "pstory/adam.hpp"

#include <cmath>

#include "pstory/error.hpp"

namespace pstory {

AdamState::AdamState(const ParamStore& params, AdamConfig config) : config_(config) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (config.weight_decay < 0.0) throw ConfigError("adam: weight decay must be nonnegative");
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.at(i).shape());
    v_.emplace_back(params.at(i).shape());
  }
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m_.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.m_.size()) + " optimizer slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.at(i).shape() != grads.at(i).shape() || params.at(i).shape() != state.m_[i].shape()) {
      throw DimensionError("adam: parameter " + params.name(i) + " has shape " +
                           shape_str(params.at(i).shape()) + " but gradient " +
                           shape_str(grads.at(i).shape()));
    }
  }
  const AdamConfig& c = state.config_;
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.at(i).span();
    auto g = grads.at(i).span();
    auto m = state.m_[i].span();
    auto v = state.v_[i].span();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= c.learning_rate * (m_hat / (std::sqrt(v_hat) + c.epsilon) + c.weight_decay * p[j]);
    }
  }
}

}  // namespace pstory
