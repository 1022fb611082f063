#include "osxr/tensor.hpp"

#include <algorithm>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "osxr/error.hpp"

namespace osxr {

namespace {
thread_local bool g_recording = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool grad_recording_enabled() noexcept { return g_recording; }

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}

template <class T>
std::shared_ptr<detail::Node<T>> new_leaf(Shape shape, std::vector<T> data) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

}  // namespace

template <class T>
BasicTensor<T> BasicTensor<T>::of(Shape shape, const Fill& fill) {
  check_extents(shape);
  const std::size_t n = shape_numel(shape);
  std::vector<T> data(n);
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, Zeros>) {
          std::fill(data.begin(), data.end(), T(0));
        } else if constexpr (std::is_same_v<F, Ones>) {
          std::fill(data.begin(), data.end(), T(1));
        } else if constexpr (std::is_same_v<F, Constant>) {
          std::fill(data.begin(), data.end(), static_cast<T>(f.value));
        } else if constexpr (std::is_same_v<F, Uniform>) {
          if (!(f.lo < f.hi)) throw DomainError("uniform fill requires lo < hi");
          std::mt19937_64 rng(f.seed);
          std::uniform_real_distribution<double> dist(f.lo, f.hi);
          for (auto& v : data) v = static_cast<T>(dist(rng));
        } else {
          if (!(f.stddev >= 0.0)) throw DomainError("gaussian fill requires stddev >= 0");
          std::mt19937_64 rng(f.seed);
          if (f.stddev == 0.0) {
            std::fill(data.begin(), data.end(), static_cast<T>(f.mean));
          } else {
            std::normal_distribution<double> dist(f.mean, f.stddev);
            for (auto& v : data) v = static_cast<T>(dist(rng));
          }
        }
      },
      fill);
  return BasicTensor(new_leaf<T>(std::move(shape), std::move(data)));
}

template <class T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> data) {
  check_extents(shape);
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not hold " + std::to_string(data.size()) +
                     " elements");
  }
  return BasicTensor(new_leaf<T>(std::move(shape), std::move(data)));
}

template <class T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(new_leaf<T>(Shape{}, std::vector<T>{value}));
}

template <class T>
const Shape& BasicTensor<T>::shape() const {
  static const Shape empty;
  return defined() ? node_->shape : empty;
}

template <class T>
std::size_t BasicTensor<T>::extent(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

template <class T>
std::span<const T> BasicTensor<T>::data() const {
  if (!defined()) return {};
  return node_->data;
}

template <class T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!defined()) return {};
  return node_->data;
}

template <class T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape()));
  return node_->data[0];
}

template <class T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  if (!defined()) throw ContractError("set_requires_grad on an undefined tensor");
  node_->requires_grad = on;
  return *this;
}

template <class T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient; run backward() first");
  return node_->grad;
}

template <class T>
void BasicTensor<T>::clear_grad() {
  if (defined()) {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const {
  if (!defined()) return {};
  auto node = new_leaf<T>(node_->shape, node_->data);
  node->requires_grad = node_->requires_grad;
  return BasicTensor(std::move(node));
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
  if (!defined()) return {};
  return BasicTensor(new_leaf<T>(node_->shape, node_->data));
}

namespace {

// Iterative post-order DFS over nodes that require grad; post-order is a
// valid topological order (operands first).
template <class T>
std::vector<std::shared_ptr<detail::Node<T>>> topo_order(const std::shared_ptr<detail::Node<T>>& root) {
  std::vector<std::shared_ptr<detail::Node<T>>> order;
  if (!root) return order;
  std::unordered_set<const detail::Node<T>*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node<T>>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

template <class T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward(): loss does not depend on any tensor that requires grad");
  }
  auto order = topo_order(loss.node());
  for (const auto& node : order) {
    if (!node->grad.empty()) {
      throw ContractError("backward(): gradient already populated on a '" + std::string(node->op) +
                          "' tensor; clear gradients before another pass");
    }
  }
  for (const auto& node : order) node->grad.assign(node->data.size(), T(0));
  loss.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->adjoint) (*it)->adjoint(**it);
  }
}

template <class T>
BasicGraph<T> BasicGraph<T>::of(const BasicTensor<T>& root) {
  BasicGraph g;
  if (root.requires_grad()) g.order_ = topo_order(root.node());
  return g;
}

template <class T>
std::vector<std::string_view> BasicGraph<T>::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(order_.size());
  for (const auto& n : order_) names.push_back(n->op);
  return names;
}

template <class T>
bool BasicGraph<T>::is_topological() const {
  std::unordered_map<const detail::Node<T>*, std::size_t> position;
  for (std::size_t i = 0; i < order_.size(); ++i) position[order_[i].get()] = i;
  for (std::size_t i = 0; i < order_.size(); ++i) {
    for (const auto& in : order_[i]->inputs) {
      auto it = position.find(in.get());
      if (it != position.end() && it->second >= i) return false;
    }
  }
  return true;
}

namespace detail {

template <class T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op,
                           std::initializer_list<BasicTensor<T>> operands,
                           std::function<void(Node<T>&)> adjoint) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (g_recording) {
    bool any = false;
    for (const auto& t : operands) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& t : operands) node->inputs.push_back(t.node());
      node->adjoint = std::move(adjoint);
    }
  }
  return BasicTensor<T>(std::move(node));
}

template BasicTensor<float> make_result(Shape, std::vector<float>, std::string_view,
                                        std::initializer_list<BasicTensor<float>>,
                                        std::function<void(Node<float>&)>);
template BasicTensor<double> make_result(Shape, std::vector<double>, std::string_view,
                                         std::initializer_list<BasicTensor<double>>,
                                         std::function<void(Node<double>&)>);

}  // namespace detail

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicGraph<float>;
template class BasicGraph<double>;
template void backward(const BasicTensor<float>&);
template void backward(const BasicTensor<double>&);

}  // namespace osxr
