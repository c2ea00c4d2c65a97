#include "hcmen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "hcmen/error.hpp"

namespace hcmen {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
  }
  node_ = std::make_shared<Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) requires a matrix");
  return node_->data[row * node_->shape[1] + col];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on non-scalar tensor of shape " + shape_to_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) node_->grad.assign(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& parents, BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  const bool track = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                                   [](const Tensor<T>& p) { return p.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.ptr());
    node->backward = std::move(fn);
  }
  return Tensor<T>(std::move(node));
}

namespace {

// Post-order over parents; iterative so long op chains cannot blow the stack.
template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) return;
  auto order = topo_order(loss.ptr().get());
  loss.node().grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && node->grad.size() == node->data.size()) node->backward(*node);
  }
}

template <typename T>
const Node<T>* first_non_finite(const Tensor<T>& root) {
  if (!root.defined()) return nullptr;
  for (Node<T>* node : topo_order(root.ptr().get())) {
    for (T v : node->data) {
      if (!std::isfinite(v)) return node;
    }
  }
  return nullptr;
}

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> tensor) {
  if (params_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  tensor.node().requires_grad = true;
  tensor.node().op = "param";
  params_.emplace(name, tensor);
  return tensor;
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

template <typename To, typename From>
void copy_values(ParamStore<To>& dst, const ParamStore<From>& src) {
  if (dst.size() != src.size()) {
    throw LoadError("parameter count mismatch: expected " + std::to_string(dst.size()) +
                    " tensors, got " + std::to_string(src.size()));
  }
  for (auto& [name, tensor] : dst) {
    if (!src.contains(name)) throw LoadError("missing parameter '" + name + "'");
    const auto& from = src.at(name);
    if (from.shape() != tensor.shape()) {
      throw LoadError("shape mismatch for '" + name + "': expected " +
                      shape_to_string(tensor.shape()) + ", got " + shape_to_string(from.shape()));
    }
    auto out = tensor.mutable_data();
    auto in = from.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(in[i]);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<long double>;
template class ParamStore<float>;
template class ParamStore<double>;
template class ParamStore<long double>;

#define HCMEN_INSTANTIATE(T)                                                                  \
  template Tensor<T> make_result<T>(const char*, Shape, std::vector<T>,                       \
                                    const std::vector<Tensor<T>>&, BackwardFn<T>);            \
  template void backward<T>(const Tensor<T>&);                                                \
  template const Node<T>* first_non_finite<T>(const Tensor<T>&);

HCMEN_INSTANTIATE(float)
HCMEN_INSTANTIATE(double)
HCMEN_INSTANTIATE(long double)
#undef HCMEN_INSTANTIATE

template void copy_values<float, float>(ParamStore<float>&, const ParamStore<float>&);
template void copy_values<double, float>(ParamStore<double>&, const ParamStore<float>&);
template void copy_values<float, double>(ParamStore<float>&, const ParamStore<double>&);
template void copy_values<double, double>(ParamStore<double>&, const ParamStore<double>&);
template void copy_values<long double, double>(ParamStore<long double>&, const ParamStore<double>&);

}  // namespace hcmen
