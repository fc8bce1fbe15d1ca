#include "hgcl/tape.hpp"

#include "hgcl/errors.hpp"

namespace hgcl {

const Tensor& Var::value() const {
  if (tape == nullptr) throw std::logic_error("Var is not bound to a tape");
  return tape->value(id);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), false, {}, std::nullopt});
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), true, {}, std::nullopt});
  return Var{this, nodes_.size() - 1};
}

void Tape::check_owned(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw std::logic_error("Var recorded on a different tape");
  }
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    check_owned(v);
    needs = needs || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), needs, needs ? std::move(backward) : Backward{},
                        std::nullopt});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    check_owned(v);
    needs = needs || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), needs, needs ? std::move(backward) : Backward{},
                        std::nullopt});
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (n.grad) return *n.grad;
  // Lazily shaped zero; only ever read.
  auto& self = const_cast<Tape&>(*this);
  self.zero_ = Tensor(n.value.shape());
  return zero_;
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id];
  return n.grad ? *n.grad : Tensor(n.value.shape());
}

Tensor* Tape::accumulator(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (!n.grad) n.grad = Tensor(n.value.shape());
  return &*n.grad;
}

void Tape::backward(Var root) {
  check_owned(root);
  if (nodes_[root.id].value.size() != 1) {
    throw DimensionError("backward() needs a scalar root, got shape " +
                         shape_string(nodes_[root.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad.reset();
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].grad = Tensor(nodes_[root.id].value.shape(), 1.0);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad) n.backward(*this, i);
  }
}

}  // namespace hgcl
