#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hcmen {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

// One vertex of the define-by-run graph. `backward` reads this node's grad
// and accumulates (+=) into the grads of `parents`.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<T> backward;

  T* grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad.data();
  }
  // Grad buffer of parent i, or nullptr when that parent is constant.
  T* parent_grad(std::size_t i) {
    return parents[i]->requires_grad ? parents[i]->grad_buffer() : nullptr;
  }
  const T* parent_data(std::size_t i) const { return parents[i]->data.data(); }
};

// Shared handle to a node. Copies alias the same storage; value semantics
// apply to the graph structure, not the buffer.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T operator[](std::size_t i) const { return node_->data[i]; }
  T at(std::size_t row, std::size_t col) const;
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  // Zero-filled span when no gradient has been accumulated yet.
  std::span<const T> grad() const;
  void zero_grad() { node_->grad.clear(); }
  const char* op() const { return node_->op; }

  // Fresh leaf holding a copy of the data, detached from any graph.
  Tensor detach() const;

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

bool grad_enabled();

// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op output. The node only records parents and `fn` when grad mode
// is on and at least one parent requires grad.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& parents, BackwardFn<T> fn);

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// reachable node that requires grad.
template <typename T>
void backward(const Tensor<T>& loss);

// Walks the graph under `root` in forward (topological) order and returns
// the first node whose data contains a NaN or Inf, or nullptr.
template <typename T>
const Node<T>* first_non_finite(const Tensor<T>& root);

// Named trainable tensors in lexicographic order.
template <typename T>
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor<T>>;
  using value_type = T;

  Tensor<T> add(const std::string& name, Tensor<T> tensor);
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;
  void zero_grad();

  typename Map::const_iterator begin() const { return params_.begin(); }
  typename Map::const_iterator end() const { return params_.end(); }
  typename Map::iterator begin() { return params_.begin(); }
  typename Map::iterator end() { return params_.end(); }

 private:
  Map params_;
};

// Copies values (with precision conversion) from `src` into the tensors of
// `dst` that share a name. Names or shapes that disagree raise LoadError.
template <typename To, typename From>
void copy_values(ParamStore<To>& dst, const ParamStore<From>& src);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tensor<long double>;
extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class ParamStore<long double>;

}  // namespace hcmen
