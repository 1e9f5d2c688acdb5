// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/diffcore/optim.hpp"

namespace danas::diff {

template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const Gradients<T>& grads, OptimizerState<T>& state) {
  require(state.learning_rate >= T{0}, "sgd_step: negative learning rate");
  require(state.momentum >= T{0} && state.momentum < T{1}, "sgd_step: momentum outside [0, 1)");
  require(state.weight_decay >= T{0}, "sgd_step: negative weight decay");
  for (Parameter<T>* p : params) {
    auto it = grads.find(p);
    if (it == grads.end()) {
      continue;
    }
    const Tensor<T>& g = it->second;
    if (g.shape() != p->value.shape()) {
      throw ContractViolation("sgd_step: gradient " + shape_str(g.shape()) + " does not match parameter '" +
                              p->name + "' " + shape_str(p->value.shape()));
    }
    auto [vit, inserted] = state.velocity.try_emplace(p, p->value.shape(), T{0});
    Tensor<T>& v = vit->second;
    require(v.shape() == p->value.shape(), "sgd_step: velocity buffer shape drifted for '" + p->name + "'");
    T* theta = p->value.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T step = state.weight_decay == T{0} ? g[i] : g[i] + state.weight_decay * theta[i];
      v[i] = state.momentum == T{0} ? step : state.momentum * v[i] + step;
      theta[i] -= state.learning_rate * v[i];
    }
  }
}

template void sgd_step<float>(std::span<Parameter<float>* const>, const Gradients<float>&, OptimizerState<float>&);
template void sgd_step<double>(std::span<Parameter<double>* const>, const Gradients<double>&,
                               OptimizerState<double>&);

}  // namespace danas::diff
