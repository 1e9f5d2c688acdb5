// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over an append-only tape. Every primitive in
// ops.hpp appends one node holding its forward value and a closure that
// propagates the output gradient to its parents. Nodes are appended in
// topological order, so backward is a single reverse sweep.

#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "danas/diffcore/tensor.hpp"

namespace danas::diff {

// A named trainable tensor that outlives any single tape.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;

  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
using Gradients = std::unordered_map<const Parameter<T>*, Tensor<T>>;

// The computation record: ordered primitives, leaf parameters, and values.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  // A parameter appears at most once per tape; repeated calls return the same node.
  Var<T> parameter(const Parameter<T>& param, bool requires_grad);

  Var<T> record(const char* op, Tensor<T> value, std::span<const Var<T>> parents, BackwardFn backward);
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> parents,
                BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  const Tensor<T>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
  const char* op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  const std::vector<int>& parents(int id) const { return nodes_.at(static_cast<std::size_t>(id)).parents; }

  // Gradient buffer of a node, zero-initialised on first access.
  Tensor<T>& grad(int id);
  // Gradient buffer of a parent if it requires one, otherwise null.
  Tensor<T>* grad_if(int id) { return requires_grad(id) ? &grad(id) : nullptr; }

  // Runs the reverse sweep from a scalar loss and returns the gradient of every
  // parameter leaf that requires one (zeros if the loss does not depend on it).
  Gradients<T> backward(Var<T> loss);

  // Gradient of any node after backward(); null when none was accumulated.
  const Tensor<T>* grad_of(Var<T> v) const;

  std::size_t size() const { return nodes_.size(); }

  // Test hook: negates every gradient contribution emitted by the named primitive.
  void inject_sign_fault(std::string op) { fault_op_ = std::move(op); }

 private:
  struct Node {
    const char* op = "";
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<int> parents;
    BackwardFn backward;
    const Parameter<T>* param = nullptr;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  Var<T> push(Node node);

  std::deque<Node> nodes_;  // deque: value() references survive later records
  std::unordered_map<const Parameter<T>*, int> param_nodes_;
  std::string fault_op_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  require(valid(), "Var: use of an unbound variable");
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return valid() && tape_->requires_grad(id_);
}

}  // namespace danas::diff
