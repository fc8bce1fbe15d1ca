#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <vector>

#include "hgcl/tensor.hpp"

namespace hgcl {

class Tape;

/// Handle to a value recorded on a Tape.
///
/// Vars are cheap to copy. They stay valid for the lifetime of the tape that
/// produced them and must not be mixed across tapes.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

/// Reverse-mode gradient tape for a single forward pass.
///
/// Nodes are appended in evaluation order, so ascending ids form a topological
/// order and `backward` walks them once in descending order. Nodes whose inputs
/// do not require gradients keep no backward closure.
///
/// A tape is confined to one thread. Use one tape per forward/backward pass.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Record an op output. The closure is kept only if some input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  /// Upstream gradient of a node during backward (zeros when untouched).
  const Tensor& grad(std::size_t id) const;

  /// Gradient of a node after `backward`; zeros for nodes that received none.
  Tensor grad(Var v) const;

  /// Mutable gradient accumulator for `id`, or nullptr if it needs no gradient.
  Tensor* accumulator(std::size_t id);

  /// Seed d(root)/d(root) = 1 and propagate adjoints to every node before root.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    Backward backward;
    std::optional<Tensor> grad;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  Tensor zero_;  // scratch returned by grad(id) for untouched nodes
};

}  // namespace hgcl
