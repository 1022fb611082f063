#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A BasicTensor is a cheap handle onto shared storage: copying the handle
// aliases the same buffer, which is how parameters are shared between the
// two twins of a Siamese network. Every differentiable op records its
// operands and an adjoint closure on the result when any operand requires a
// gradient; backward() replays those closures in reverse topological order.
//
// Training runs on BasicTensor<float>. The same kernels are instantiated for
// double so finite-difference checks can resolve small gradients.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace osxr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Zeros {};
struct Ones {};
struct Constant {
  double value = 0.0;
};
struct Uniform {
  double lo = 0.0;
  double hi = 1.0;
  std::uint64_t seed = 0;
};
struct Gaussian {
  double mean = 0.0;
  double stddev = 1.0;
  std::uint64_t seed = 0;
};
using Fill = std::variant<Zeros, Ones, Constant, Uniform, Gaussian>;

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> adjoint;

  std::vector<T>* input_grad(std::size_t i) const {
    auto& in = inputs[i];
    return in->requires_grad ? &in->grad : nullptr;
  }
};

}  // namespace detail

template <class T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor() = default;
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

  static BasicTensor of(Shape shape, const Fill& fill);
  static BasicTensor from(Shape shape, std::vector<T> data);
  static BasicTensor scalar(T value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const { return defined() ? node_->data.size() : 0; }

  std::span<const T> data() const;
  /// Writable view. Mutating a tensor that is part of a recorded graph
  /// invalidates that graph's adjoints.
  std::span<T> mutable_data();
  T operator[](std::size_t flat) const { return data()[flat]; }
  T item() const;

  bool requires_grad() const noexcept { return defined() && node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on);

  bool has_grad() const noexcept { return defined() && !node_->grad.empty(); }
  std::span<const T> grad() const;
  void clear_grad();

  /// Deep copy with the same requires_grad flag and no recorded history.
  BasicTensor clone() const;
  /// Deep copy that never requires a gradient.
  BasicTensor detach() const;

  bool shares_storage_with(const BasicTensor& other) const noexcept { return node_ == other.node_; }
  std::string_view op_name() const { return defined() ? node_->op : std::string_view{"undefined"}; }

  const NodePtr& node() const noexcept { return node_; }

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;

template <class T>
BasicTensor<T> tensor_of(Shape shape, const Fill& fill) {
  return BasicTensor<T>::of(std::move(shape), fill);
}

inline Tensor tensor_of(Shape shape, const Fill& fill) { return Tensor::of(std::move(shape), fill); }

/// Populates grad on every requires_grad tensor reachable from `loss`.
/// Gradients are written once per pass: calling this while any of those
/// tensors still holds a gradient is a ContractError.
template <class T>
void backward(const BasicTensor<T>& loss);

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled() noexcept;

/// The recorded operations reachable from a root, producers before consumers.
template <class T>
class BasicGraph {
 public:
  static BasicGraph of(const BasicTensor<T>& root);

  std::size_t size() const noexcept { return order_.size(); }
  std::vector<std::string_view> op_names() const;
  /// True when every node appears after all of its recorded operands.
  bool is_topological() const;
  std::span<const std::shared_ptr<detail::Node<T>>> nodes() const { return order_; }

 private:
  std::vector<std::shared_ptr<detail::Node<T>>> order_;
};

using Graph = BasicGraph<float>;

namespace detail {

// Builds a result node, wiring operands and adjoint only when recording is on
// and some operand requires a gradient.
template <class T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op,
                           std::initializer_list<BasicTensor<T>> operands,
                           std::function<void(Node<T>&)> adjoint);

}  // namespace detail

}  // namespace osxr
