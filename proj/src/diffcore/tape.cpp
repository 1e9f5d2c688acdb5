// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/diffcore/tape.hpp"

#include <cstring>
#include <sstream>

namespace danas::diff {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  node.is_leaf = true;
  return push(std::move(node));
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  return push(std::move(node));
}

template <typename T>
Var<T> Tape<T>::parameter(const Parameter<T>& param, bool requires_grad) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) {
    Node& existing = nodes_[static_cast<std::size_t>(it->second)];
    require(existing.requires_grad == requires_grad,
            "Tape::parameter: '" + param.name + "' bound twice with different requires_grad");
    return Var<T>(this, it->second);
  }
  Node node;
  node.op = "parameter";
  node.value = param.value;
  node.param = &param;
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  Var<T> v = push(std::move(node));
  param_nodes_.emplace(&param, v.id());
  return v;
}

template <typename T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value, std::span<const Var<T>> parents,
                       BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.parents.reserve(parents.size());
  for (const Var<T>& p : parents) {
    require(p.tape() == this, std::string("Tape::record: parent of '") + op + "' is on another tape");
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || requires_grad(p.id());
  }
  if (node.requires_grad) {
    node.backward = std::move(backward);
  }
  return push(std::move(node));
}

template <typename T>
Tensor<T>& Tape<T>::grad(int id) {
  Node& node = nodes_.at(static_cast<std::size_t>(id));
  if (node.grad.empty()) {
    node.grad = Tensor<T>(node.value.shape(), T{0});
  }
  return node.grad;
}

template <typename T>
Gradients<T> Tape<T>::backward(Var<T> loss) {
  require(loss.tape() == this, "Tape::backward: loss belongs to another tape");
  const Node& root = nodes_.at(static_cast<std::size_t>(loss.id()));
  if (root.value.size() != 1) {
    throw ContractViolation("Tape::backward: loss must be scalar, got shape " + shape_str(root.value.shape()));
  }
  for (Node& node : nodes_) {
    node.grad = Tensor<T>();
  }
  if (root.requires_grad) {
    grad(loss.id()).fill(T{1});
  }

  std::vector<Tensor<T>> snapshot;
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.is_leaf || !node.requires_grad || node.grad.empty() || !node.backward) {
      continue;
    }
    const bool faulty = !fault_op_.empty() && fault_op_ == node.op;
    if (faulty) {
      snapshot.clear();
      for (int p : node.parents) {
        snapshot.push_back(requires_grad(p) ? grad(p) : Tensor<T>());
      }
    }
    node.backward(*this, id);
    if (faulty) {
      for (std::size_t k = 0; k < node.parents.size(); ++k) {
        if (!requires_grad(node.parents[k])) {
          continue;
        }
        Tensor<T>& g = grad(node.parents[k]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] = snapshot[k][i] - (g[i] - snapshot[k][i]);
        }
      }
    }
    if (id != loss.id()) {
      node.grad = Tensor<T>();
    }
  }

  Gradients<T> out;
  for (const auto& [param, id] : param_nodes_) {
    if (requires_grad(id)) {
      out.emplace(param, grad(id));
    }
  }
  return out;
}

template <typename T>
const Tensor<T>* Tape<T>::grad_of(Var<T> v) const {
  const Node& node = nodes_.at(static_cast<std::size_t>(v.id()));
  return node.grad.empty() ? nullptr : &node.grad;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace danas::diff
