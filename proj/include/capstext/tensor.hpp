#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "capstext/error.hpp"
#include "capstext/rng.hpp"

namespace capstext {

using Shape = std::vector<size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

// Validates extents and returns the element count.
inline size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("invalid shape: empty extent list");
  size_t n = 1;
  for (size_t e : shape) {
    if (e == 0) throw ShapeError("invalid shape: zero extent in " + shape_str(shape));
    n *= e;
  }
  return n;
}

namespace detail {
inline uint64_t next_tensor_id() {
  static std::atomic<uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// One node of a differentiation graph. Nodes own their inputs, so a graph
// stays alive exactly as long as some handle to its outputs does.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated by backward(), same length as value
  bool requires_grad = false;
  uint64_t id = detail::next_tensor_id();
  std::string name;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void()> backprop;  // accumulates this node's grad into inputs

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

// Value-semantic handle to a graph node. Copies share the node.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    size_t n = shape_numel(shape);
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->value.assign(n, value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false) {
    size_t n = shape_numel(shape);
    if (values.size() != n) {
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor uniform(Shape shape, T lo, T hi, uint64_t seed, bool requires_grad = false) {
    size_t n = shape_numel(shape);
    Rng rng(seed);
    std::vector<T> values(n);
    for (auto& v : values) v = static_cast<T>(rng.next_uniform(lo, hi));
    return from_values(std::move(shape), std::move(values), requires_grad);
  }

  // Glorot bound from explicit fans; rank >= 2 tensors can use the overload
  // below which takes the fans from the last two extents.
  static Tensor glorot_uniform(Shape shape, size_t fan_in, size_t fan_out, uint64_t seed,
                               bool requires_grad = true) {
    if (fan_in == 0 || fan_out == 0) throw ContractError("glorot_uniform: zero fan");
    T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
    return uniform(std::move(shape), -bound, bound, seed, requires_grad);
  }

  static Tensor glorot_uniform(Shape shape, uint64_t seed, bool requires_grad = true) {
    if (shape.size() < 2) throw ContractError("glorot_uniform: rank must be >= 2, got " + shape_str(shape));
    size_t fan_in = shape[shape.size() - 2];
    size_t fan_out = shape[shape.size() - 1];
    return glorot_uniform(std::move(shape), fan_in, fan_out, seed, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t rank() const { return node_->shape.size(); }
  size_t extent(size_t axis) const { return node_->shape.at(axis); }
  size_t numel() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  // Direct storage access, used by optimizers and perturbation-based checks.
  // Mutating anything but a leaf invalidates recorded gradients.
  std::span<T> mutable_values() { return node_->value; }

  T scalar() const {
    if (numel() != 1) throw ContractError("scalar() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->inputs.empty(); }
  const std::string& name() const { return node_->name; }
  Tensor& set_name(std::string name) {
    node_->name = std::move(name);
    return *this;
  }

  // Copy of the current values as a fresh leaf outside any graph.
  Tensor detached() const {
    return from_values(node_->shape, node_->value, false);
  }

  std::span<const T> grad() const { return node_->grad; }

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

namespace detail {

// Deterministic reverse-topological ordering: iterative post-order walk
// following inputs in their stored order, then reversed by the caller.
template <typename T>
std::vector<TensorNode<T>*> postorder(TensorNode<T>* root) {
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> visited;
  std::vector<std::pair<TensorNode<T>*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode<T>* input = node->inputs[next++].get();
      if (input->requires_grad && !visited.count(input)) {
        visited.insert(input);
        stack.emplace_back(input, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace detail

// Reverse-mode differentiation from a scalar loss. Returns the gradient for
// every named leaf with requires_grad reached from the loss; unnamed leaves
// get an id-derived key. Safe to call repeatedly: gradients are reset first.
template <typename T>
GradientMap<T> backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  GradientMap<T> grads;
  if (!loss.requires_grad()) return grads;

  auto order = detail::postorder(loss.node().get());
  for (auto* node : order) node->grad.assign(node->value.size(), T(0));
  loss.node()->grad[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop();
  }

  for (auto* node : order) {
    if (!node->inputs.empty() || !node->requires_grad) continue;
    std::string key = node->name.empty() ? "tensor#" + std::to_string(node->id) : node->name;
    if (grads.count(key)) {
      throw ContractError("backward: duplicate parameter name '" + key + "'");
    }
    grads.emplace(std::move(key), Tensor<T>::from_values(node->shape, node->grad, false));
  }
  return grads;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  auto av = a.values();
  auto bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) {
    if (std::memcmp(&av[i], &bv[i], sizeof(T)) != 0) return false;
  }
  return true;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.values()) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

}  // namespace capstext
