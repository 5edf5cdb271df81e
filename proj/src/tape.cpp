#include "ymwml/tape.hpp"

#include <unordered_set>

namespace ymwml {

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

bool Tape::should_record(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

bool Tape::should_record(const std::vector<Tensor>& inputs) const {
  if (!enabled_) return false;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

void Tape::check_live(const Tensor& t) const {
  if (!t.is_leaf() && t.generation() != generation_) {
    throw Error(Errc::tape_reset, "tensor was produced before the last tape reset");
  }
}

void Tape::record(std::string op, std::vector<Tensor> inputs, Tensor& output,
                  BackwardFn backward) {
  for (const auto& in : inputs) {
    if (in.requires_grad()) check_live(in);
  }
  output.set_requires_grad(true);
  output.impl()->generation = generation_;
  nodes_.push_back(Node{std::move(op), std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw Error(Errc::non_scalar_loss, "backward needs a scalar loss, got shape " +
                                           shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw Error(Errc::missing_gradient, "loss does not depend on any trainable tensor");
  }
  check_live(loss);
  if (loss.is_leaf()) {
    Tensor root = loss;
    root.grad()[0] += 1.0;
    return;
  }

  // Nodes recorded after the loss cannot influence it; start at the loss's node.
  std::size_t end = nodes_.size();
  while (end > 0 && !nodes_[end - 1].output.same_as(loss)) --end;
  if (end == 0) throw Error(Errc::tape_reset, "loss is not recorded on this tape");

  // Mark the nodes the loss depends on. Intermediate gradients restart from
  // zero on every call so only leaves accumulate across calls.
  std::vector<std::size_t> reachable;
  std::unordered_set<const void*> needed{loss.impl()};
  for (std::size_t i = end; i-- > 0;) {
    Node& node = nodes_[i];
    if (!needed.contains(node.output.impl())) continue;
    reachable.push_back(i);
    node.output.zero_grad();
    for (const auto& in : node.inputs) {
      if (in.requires_grad()) needed.insert(in.impl());
    }
  }
  Tensor root = loss;
  root.grad()[0] += 1.0;
  for (std::size_t i : reachable) {
    Node& node = nodes_[i];
    if (observer_) observer_(node.op);
    node.backward(node);
  }
}

void Tape::reset() {
  nodes_.clear();
  ++generation_;
}

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

}  // namespace ymwml
