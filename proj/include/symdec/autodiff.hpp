#ifndef SYMDEC_AUTODIFF_HPP
#define SYMDEC_AUTODIFF_HPP

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "symdec/tensor.hpp"

namespace symdec::ad {

template <typename Scalar>
using TensorRefs = std::span<const Tensor<Scalar>* const>;

/// A differentiable primitive: forward map plus its vector-Jacobian product.
/// backward(inputs, output, cotangent) returns one cotangent per input, shaped like that input.
template <typename Scalar>
struct AdjointRule {
  std::string name;
  std::function<Tensor<Scalar>(TensorRefs<Scalar>)> forward;
  std::function<std::vector<Tensor<Scalar>>(TensorRefs<Scalar>, const Tensor<Scalar>&, const Tensor<Scalar>&)>
      backward;
};

template <typename Scalar>
using RulePtr = std::shared_ptr<const AdjointRule<Scalar>>;

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  RulePtr<Scalar> rule;
  std::string label;
};

/// Handle to a value in the computation graph.
template <typename Scalar>
class Var {
 public:
  Var() = default;

  static Var constant(Tensor<Scalar> value) {
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  static Var parameter(Tensor<Scalar> value, std::string label = {}) {
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->label = std::move(label);
    return Var(std::move(n));
  }

  const Tensor<Scalar>& value() const { return node_->value; }
  const Tensor<Scalar>& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& label() const { return node_->label; }
  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }
  explicit operator bool() const { return bool(node_); }

 private:
  explicit Var(std::shared_ptr<Node<Scalar>> n) : node_(std::move(n)) {}
  template <typename S>
  friend Var<S> apply(RulePtr<S>, const std::vector<Var<S>>&);

  std::shared_ptr<Node<Scalar>> node_;
};

template <typename Scalar>
Var<Scalar> apply(RulePtr<Scalar> rule, const std::vector<Var<Scalar>>& inputs) {
  std::vector<const Tensor<Scalar>*> refs;
  refs.reserve(inputs.size());
  bool needs = false;
  for (const auto& v : inputs) {
    refs.push_back(&v.value());
    needs = needs || v.requires_grad();
  }
  auto n = std::make_shared<Node<Scalar>>();
  n->value = rule->forward(TensorRefs<Scalar>(refs));
  if (needs) {
    n->requires_grad = true;
    n->rule = std::move(rule);
    for (const auto& v : inputs) n->parents.push_back(v.node());
  }
  return Var<Scalar>(std::move(n));
}

template <typename Scalar>
void accumulate(Tensor<Scalar>& into, const Tensor<Scalar>& g) {
  if (into.empty()) {
    into = g;
  } else {
    into.vec() += g.vec();
  }
}

/// Reverse pass from `root` seeded with `seed` (same shape as root). Gradients accumulate into
/// every reachable node with requires_grad; interior gradients are released once propagated.
template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>& seed) {
  if (!root.requires_grad()) return;
  if (seed.shape() != root.shape()) {
    throw ShapeError("backward seed " + shape_string(seed.shape()) + " vs root " + shape_string(root.shape()));
  }
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  accumulate(root.node()->grad, seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (!node->rule || node->grad.empty()) continue;
    std::vector<const Tensor<Scalar>*> refs;
    for (const auto& p : node->parents) refs.push_back(&p->value);
    auto grads = node->rule->backward(TensorRefs<Scalar>(refs), node->value, node->grad);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      auto& p = node->parents[i];
      if (p->requires_grad && !grads[i].empty()) accumulate(p->grad, grads[i]);
    }
    node->grad = Tensor<Scalar>();
  }
}

/// Seeds with ones; intended for scalar losses.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  backward(root, Tensor<Scalar>(root.shape(), Scalar(1)));
}

template <typename Scalar>
RulePtr<Scalar> make_rule(std::string name, decltype(AdjointRule<Scalar>::forward) fwd,
                          decltype(AdjointRule<Scalar>::backward) bwd) {
  return std::make_shared<const AdjointRule<Scalar>>(AdjointRule<Scalar>{std::move(name), std::move(fwd), std::move(bwd)});
}

/// Wraps a whole graph-building function as a single rule; its backward runs the reverse pass.
template <typename Scalar>
RulePtr<Scalar> graph_rule(std::string name, std::function<Var<Scalar>(const std::vector<Var<Scalar>>&)> fn) {
  auto fwd = [fn](TensorRefs<Scalar> in) {
    std::vector<Var<Scalar>> vars;
    for (const auto* t : in) vars.push_back(Var<Scalar>::constant(*t));
    return fn(vars).value();
  };
  auto bwd = [fn](TensorRefs<Scalar> in, const Tensor<Scalar>&, const Tensor<Scalar>& cot) {
    std::vector<Var<Scalar>> vars;
    for (const auto* t : in) vars.push_back(Var<Scalar>::parameter(*t));
    backward(fn(vars), cot);
    std::vector<Tensor<Scalar>> grads;
    for (std::size_t i = 0; i < vars.size(); ++i) {
      grads.push_back(vars[i].grad().empty() ? Tensor<Scalar>(in[i]->shape()) : vars[i].grad());
    }
    return grads;
  };
  return make_rule<Scalar>(std::move(name), fwd, bwd);
}

}  // namespace symdec::ad

#endif  // SYMDEC_AUTODIFF_HPP
