#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ymwml/tensor.hpp"

namespace ymwml {

struct Node;
using BackwardFn = std::function<void(Node&)>;

/// One recorded operator application. Saved forward values live in the
/// closure captured by `backward`.
struct Node {
  std::string op;
  std::vector<Tensor> inputs;
  Tensor output;
  BackwardFn backward;
};

/// Records operator applications in execution order and replays them in
/// exact reverse during backward. One tape per thread.
class Tape {
 public:
  static Tape& active();

  /// True when at least one input participates in differentiation and
  /// recording has not been suspended by a NoGradGuard.
  bool should_record(std::initializer_list<const Tensor*> inputs) const;
  bool should_record(const std::vector<Tensor>& inputs) const;

  /// Attaches `output` to the graph. Allocates the output gradient buffer.
  void record(std::string op, std::vector<Tensor> inputs, Tensor& output,
              BackwardFn backward);

  void backward(const Tensor& loss);

  /// Drops every node; tensors produced before the reset can no longer be
  /// differentiated through.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::uint64_t generation() const { return generation_; }

  bool enabled() const { return enabled_; }
  void set_enabled(bool on) { enabled_ = on; }

  /// Called with the op name of every node visited during backward.
  void set_observer(std::function<void(std::string_view)> observer) {
    observer_ = std::move(observer);
  }

 private:
  void check_live(const Tensor& t) const;

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
  bool enabled_ = true;
  std::function<void(std::string_view)> observer_;
};

/// Populates .grad of every requires_grad tensor reachable from `loss`.
/// Gradients accumulate additively.
void backward(const Tensor& loss, Tape& tape = Tape::active());

/// Suspends recording for its lifetime (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard() : tape_(Tape::active()), previous_(tape_.enabled()) {
    tape_.set_enabled(false);
  }
  ~NoGradGuard() { tape_.set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape& tape_;
  bool previous_;
};

}  // namespace ymwml
