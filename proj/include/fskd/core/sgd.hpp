#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/core/tensor.hpp"

namespace fskd {

// SGD with momentum and L2 weight decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
struct SgdState {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::vector<std::vector<double>> velocity;  // one per parameter, same shapes

  SgdState() = default;
  SgdState(double lr, double mom, double wd) : learning_rate(lr), momentum(mom), weight_decay(wd) {
    if (lr < 0.0) throw ConfigError("sgd: negative learning rate");
    if (mom < 0.0 || mom >= 1.0) throw ConfigError("sgd: momentum must be in [0,1)");
    if (wd < 0.0) throw ConfigError("sgd: negative weight decay");
  }

  void bind(const std::vector<Tensor>& params) {
    velocity.clear();
    velocity.reserve(params.size());
    for (const auto& p : params) velocity.emplace_back(p.size(), 0.0);
  }
};

inline void sgd_step(std::vector<Tensor>& params, SgdState& state) {
  if (state.velocity.size() != params.size())
    throw ShapeError("sgd_step: optimizer bound to " + std::to_string(state.velocity.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p].data_mut();
    const auto& grad = params[p].grad();
    auto& vel = state.velocity[p];
    if (vel.size() != param.size() || grad.size() != param.size())
      throw ShapeError("sgd_step: shape mismatch at parameter " + std::to_string(p));
    for (std::size_t i = 0; i < param.size(); ++i) {
      vel[i] = state.momentum * vel[i] + grad[i] + state.weight_decay * param[i];
      param[i] -= state.learning_rate * vel[i];
    }
  }
}

inline void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace fskd
