#pragma once

#include <cstdint>
#include <vector>

#include "pstory/params.hpp"

namespace pstory {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled from the adaptive step: p -= lr * weight_decay * p.
  double weight_decay = 0.0;
};

class AdamState {
 public:
  AdamState(const ParamStore& params, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

  friend void adam_step(ParamStore& params, const Gradients& grads, AdamState& state);

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

// One bias-corrected Adam update of every parameter.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state);

}  // namespace pstory
