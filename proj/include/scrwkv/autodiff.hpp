#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "scrwkv/tensor.hpp"

namespace scrwkv {

// Gradient recording is on by default; NoGradGuard turns it off for the
// current thread (inference, finite-difference probes).
class GradMode {
 public:
  static bool enabled() noexcept { return flag(); }
  static void set(bool on) noexcept { flag() = on; }

 private:
  static bool& flag() noexcept {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
struct Node;

// Receives dL/d(output) and one accumulator per input (nullptr when the
// input does not need a gradient). Implementations add into accumulators.
template <typename Scalar>
using BackwardFn = std::function<void(const Node<Scalar>& self, const Tensor<Scalar>& grad,
                                      std::span<Tensor<Scalar>* const> input_grads)>;

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn<Scalar> backward;
  bool requires_grad = false;
  std::uint64_t sequence = 0;
  std::string name;

  const Tensor<Scalar>& input(std::size_t i) const { return inputs[i]->value; }
  bool is_leaf() const noexcept { return inputs.empty(); }

  static std::uint64_t next_sequence() noexcept {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }
};

/// Handle to a value in the computation graph. Copies share the node.
template <typename Scalar>
class Var {
 public:
  Var() = default;

  explicit Var(Tensor<Scalar> value, bool requires_grad = false, std::string name = {})
      : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->sequence = Node<Scalar>::next_sequence();
    node_->name = std::move(name);
  }

  static Var parameter(Tensor<Scalar> value, std::string name) {
    return Var(std::move(value), true, std::move(name));
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  // Leaves only; used by optimizers and finite-difference probes.
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(Index axis) const { return node_->value.dim(axis); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  const Node<Scalar>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<Scalar>>& node_ptr() const noexcept { return node_; }

  // Graph-free copy of the current value.
  Var detach() const { return Var(node_->value); }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

/// Creates the output node of an operation. Inputs are retained and the
/// backward closure recorded only when recording is on and some input needs a
/// gradient; otherwise the result is a constant.
template <typename Scalar>
Var<Scalar> record(Tensor<Scalar> value, const std::vector<Var<Scalar>>& inputs,
                   BackwardFn<Scalar> backward) {
  bool needs = false;
  if (GradMode::enabled())
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  Var<Scalar> out(std::move(value), needs);
  if (needs) {
    Node<Scalar>& node = *out.node_ptr();
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) node.inputs.push_back(in.node_ptr());
    node.backward = std::move(backward);
  }
  return out;
}

template <typename Scalar>
Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs,
                   BackwardFn<Scalar> backward) {
  return record(std::move(value), std::vector<Var<Scalar>>(inputs), std::move(backward));
}

/// Nodes reachable from a root that carry gradients, in creation order
/// (a valid topological order: every node is created after its inputs).
template <typename Scalar>
class Tape {
 public:
  static Tape trace(const Var<Scalar>& root) {
    Tape tape;
    if (!root.requires_grad()) return tape;
    std::unordered_set<const Node<Scalar>*> seen;
    std::vector<const Node<Scalar>*> stack{root.node()};
    seen.insert(root.node());
    while (!stack.empty()) {
      const Node<Scalar>* n = stack.back();
      stack.pop_back();
      tape.nodes_.push_back(n);
      for (const auto& in : n->inputs)
        if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const auto* a, const auto* b) { return a->sequence < b->sequence; });
    return tape;
  }

  const std::vector<const Node<Scalar>*>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  std::vector<const Node<Scalar>*> nodes_;
};

/// Gradients of a scalar loss with respect to leaf nodes.
template <typename Scalar>
class Gradients {
 public:
  // Zero tensor for leaves the loss does not reach.
  Tensor<Scalar> operator[](const Var<Scalar>& v) const {
    auto it = grads_.find(v.node());
    if (it == grads_.end()) return Tensor<Scalar>(v.shape());
    return it->second;
  }
  bool contains(const Var<Scalar>& v) const { return grads_.count(v.node()) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  template <typename S>
  friend Gradients<S> backward(const Var<S>& loss);
  std::unordered_map<const Node<Scalar>*, Tensor<Scalar>> grads_;
};

/// Reverse-mode pass from a scalar loss. Each tape node is visited once, in
/// reverse creation order.
template <typename Scalar>
Gradients<Scalar> backward(const Var<Scalar>& loss) {
  if (!loss.defined() || loss.value().size() != 1)
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  Gradients<Scalar> out;
  const Tape<Scalar> tape = Tape<Scalar>::trace(loss);
  if (tape.size() == 0) return out;

  std::unordered_map<const Node<Scalar>*, Tensor<Scalar>> grads;
  grads.emplace(loss.node(), Tensor<Scalar>::constant(loss.shape(), Scalar(1)));
  std::vector<Tensor<Scalar>*> slots;
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    const Node<Scalar>* n = *it;
    auto g = grads.find(n);
    if (g == grads.end()) continue;
    if (n->is_leaf()) {
      out.grads_.emplace(n, std::move(g->second));
      grads.erase(g);
      continue;
    }
    // References into the map survive rehashing; iterators do not.
    const Tensor<Scalar>& grad = g->second;
    slots.assign(n->inputs.size(), nullptr);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      const Node<Scalar>* in = n->inputs[i].get();
      if (!in->requires_grad) continue;
      auto [slot, inserted] = grads.try_emplace(in);
      if (inserted) slot->second = Tensor<Scalar>(in->value.shape());
      slots[i] = &slot->second;
    }
    n->backward(*n, grad, slots);
    grads.erase(n);
  }
  return out;
}

}  // namespace scrwkv
