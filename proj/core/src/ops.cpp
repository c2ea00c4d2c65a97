#include "hcmen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hcmen/error.hpp"

namespace hcmen {

namespace {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

template <typename T>
void require_matrix(const char* op, const Tensor<T>& x) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_to_string(x.shape()));
  }
}

template <typename T>
std::size_t last_dim(const char* op, const Tensor<T>& x) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + ": rank-0 input");
  return x.shape().back();
}

template <typename T>
T clamp_exp_arg(T v) {
  return std::clamp(v, T(-kExpClamp), T(kExpClamp));
}

// m x k times k x n, accumulated into out.
template <typename T>
void gemm_acc(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

// ga[m x k] += g[m x n] * b^T, gb[k x n] += a^T * g.
template <typename T>
void gemm_backward(const T* a, const T* b, const T* g, T* ga, T* gb, std::size_t m,
                   std::size_t k, std::size_t n) {
  if (ga) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* grow = g + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n;
        T acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        ga[i * k + p] += acc;
      }
    }
  }
  if (gb) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* grow = g + i * n;
      const T* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        T* gbrow = gb + p * n;
        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (T* g = self.parent_grad(p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    if (T* g = self.parent_grad(0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = self.parent_grad(1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const T* av = self.parent_data(0);
    const T* bv = self.parent_data(1);
    if (T* g = self.parent_grad(0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (T* g = self.parent_grad(1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return make_result<T>("scale", a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
    if (T* g = self.parent_grad(0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& v) {
  const std::size_t d = last_dim("add_channel", x);
  if (v.numel() != d) throw DimensionError("add_channel: channel vector length mismatch");
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + v[i % d];
  return make_result<T>("add_channel", x.shape(), std::move(out), {x, v}, [d](Node<T>& self) {
    if (T* g = self.parent_grad(0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = self.parent_grad(1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % d] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& v) {
  const std::size_t d = last_dim("mul_channel", x);
  if (v.numel() != d) throw DimensionError("mul_channel: channel vector length mismatch");
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * v[i % d];
  return make_result<T>("mul_channel", x.shape(), std::move(out), {x, v}, [d](Node<T>& self) {
    const T* xv = self.parent_data(0);
    const T* vv = self.parent_data(1);
    if (T* g = self.parent_grad(0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * vv[i % d];
    }
    if (T* g = self.parent_grad(1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % d] += self.grad[i] * xv[i];
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    gemm_backward(self.parent_data(0), self.parent_data(1), self.grad.data(),
                  self.parent_grad(0), self.parent_grad(1), m, k, n);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_matrix("transpose", a);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return make_result<T>("transpose", {c, r}, std::move(out), {a}, [r, c](Node<T>& self) {
    if (T* g = self.parent_grad(0)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_matrix("linear", x);
  require_matrix("linear", weight);
  const std::size_t m = x.dim(0), k = x.dim(1), n = weight.dim(1);
  if (weight.dim(0) != k) {
    throw DimensionError("linear: input width " + std::to_string(k) + " vs weight " +
                         shape_to_string(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != n) throw DimensionError("linear: bias length mismatch");
  std::vector<T> out(m * n, T(0));
  if (has_bias) {
    for (std::size_t i = 0; i < m; ++i)
      std::copy(bias.data().begin(), bias.data().end(), out.begin() + i * n);
  }
  gemm_acc(x.data().data(), weight.data().data(), out.data(), m, k, n);
  std::vector<Tensor<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result<T>("linear", {m, n}, std::move(out), parents,
                        [m, k, n, has_bias](Node<T>& self) {
                          gemm_backward(self.parent_data(0), self.parent_data(1),
                                        self.grad.data(), self.parent_grad(0),
                                        self.parent_grad(1), m, k, n);
                          if (has_bias) {
                            if (T* gb = self.parent_grad(2)) {
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x[i];
    switch (kind) {
      case Activation::Exp:
        out[i] = std::exp(clamp_exp_arg(v));
        break;
      case Activation::Softplus:
        out[i] = v > T(kExpClamp) ? v : std::log1p(std::exp(clamp_exp_arg(v)));
        break;
      case Activation::Silu:
        out[i] = v / (T(1) + std::exp(-clamp_exp_arg(v)));
        break;
      case Activation::Tanh:
        out[i] = std::tanh(v);
        break;
      case Activation::Sigmoid:
        out[i] = T(1) / (T(1) + std::exp(-clamp_exp_arg(v)));
        break;
    }
  }
  return make_result<T>("activation", x.shape(), std::move(out), {x}, [kind](Node<T>& self) {
    T* g = self.parent_grad(0);
    if (!g) return;
    const T* xv = self.parent_data(0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = xv[i];
      T d = 0;
      switch (kind) {
        case Activation::Exp:
          d = std::abs(v) > T(kExpClamp) ? T(0) : self.data[i];
          break;
        case Activation::Softplus:
          d = T(1) / (T(1) + std::exp(-clamp_exp_arg(v)));
          break;
        case Activation::Silu: {
          const T s = T(1) / (T(1) + std::exp(-clamp_exp_arg(v)));
          d = s * (T(1) + v * (T(1) - s));
          break;
        }
        case Activation::Tanh:
          d = T(1) - self.data[i] * self.data[i];
          break;
        case Activation::Sigmoid:
          d = self.data[i] * (T(1) - self.data[i]);
          break;
      }
      g[i] += self.grad[i] * d;
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t n = last_dim("softmax", x);
  const std::size_t rows = n ? x.numel() / n : 0;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * n;
    T* o = out.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return make_result<T>("softmax", x.shape(), std::move(out), {x}, [n, rows](Node<T>& self) {
    T* g = self.parent_grad(0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * n;
      const T* gy = self.grad.data() + r * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t n = last_dim("log_softmax", x);
  const std::size_t rows = n ? x.numel() / n : 0;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * n;
    T* o = out.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(in[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) o[j] = in[j] - lse;
  }
  return make_result<T>("log_softmax", x.shape(), std::move(out), {x}, [n, rows](Node<T>& self) {
    T* g = self.parent_grad(0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * n;
      const T* gy = self.grad.data() + r * n;
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) total += gy[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += gy[j] - std::exp(y[j]) * total;
    }
  });
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis) {
  const std::size_t count = x.dim(axis);
  if (count == 0) throw DimensionError("mean_axis: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  Shape shape;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis) shape.push_back(x.shape()[i]);
  if (shape.empty()) shape.push_back(1);
  std::vector<T> out(outer * inner, T(0));
  const T inv = T(1) / static_cast<T>(count);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < count; ++c)
      for (std::size_t i = 0; i < inner; ++i)
        out[o * inner + i] += x[(o * count + c) * inner + i];
  for (auto& v : out) v *= inv;
  return make_result<T>("mean_axis", std::move(shape), std::move(out), {x},
                        [outer, count, inner, inv](Node<T>& self) {
                          T* g = self.parent_grad(0);
                          if (!g) return;
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t c = 0; c < count; ++c)
                              for (std::size_t i = 0; i < inner; ++i)
                                g[(o * count + c) * inner + i] += self.grad[o * inner + i] * inv;
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>("sum", {1}, {total}, {x}, [](Node<T>& self) {
    T* g = self.parent_grad(0);
    if (!g) return;
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> reverse_time(const Tensor<T>& x) {
  require_matrix("reverse_time", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data().begin() + (rows - 1 - r) * cols, cols, out.begin() + r * cols);
  return make_result<T>("reverse_time", x.shape(), std::move(out), {x},
                        [rows, cols](Node<T>& self) {
                          T* g = self.parent_grad(0);
                          if (!g) return;
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < cols; ++c)
                              g[(rows - 1 - r) * cols + c] += self.grad[r * cols + c];
                        });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts.front().dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_matrix("concat_rows", p);
    if (p.dim(1) != cols) throw DimensionError("concat_rows: column count mismatch");
    rows += p.dim(0);
  }
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>("concat_rows", {rows, cols}, std::move(out), parts, [](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t n = self.parents[p]->data.size();
      if (T* g = self.parent_grad(p)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  require_matrix("gather_rows", x);
  const std::size_t cols = x.dim(1);
  for (auto r : rows)
    if (r >= x.dim(0)) throw DimensionError("gather_rows: row index out of range");
  std::vector<T> out(rows.size() * cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.data().begin() + rows[i] * cols, cols, out.begin() + i * cols);
  return make_result<T>("gather_rows", {rows.size(), cols}, std::move(out), {x},
                        [rows, cols](Node<T>& self) {
                          T* g = self.parent_grad(0);
                          if (!g) return;
                          for (std::size_t i = 0; i < rows.size(); ++i)
                            for (std::size_t c = 0; c < cols; ++c)
                              g[rows[i] * cols + c] += self.grad[i * cols + c];
                        });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_matrix("slice_cols", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > cols) throw DimensionError("slice_cols: invalid column range");
  const std::size_t w = end - begin;
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data().begin() + r * cols + begin, w, out.begin() + r * w);
  return make_result<T>("slice_cols", {rows, w}, std::move(out), {x},
                        [rows, cols, begin, w](Node<T>& self) {
                          T* g = self.parent_grad(0);
                          if (!g) return;
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < w; ++c)
                              g[r * cols + begin + c] += self.grad[r * w + c];
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " to " +
                         shape_to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {x}, [](Node<T>& self) {
    if (T* g = self.parent_grad(0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> diagonal(const Tensor<T>& x) {
  require_matrix("diagonal", x);
  const std::size_t n = std::min(x.dim(0), x.dim(1)), cols = x.dim(1);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i * cols + i];
  return make_result<T>("diagonal", {n}, std::move(out), {x}, [n, cols](Node<T>& self) {
    if (T* g = self.parent_grad(0)) {
      for (std::size_t i = 0; i < n; ++i) g[i * cols + i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> row_normalize(const Tensor<T>& x, T eps) {
  const std::size_t d = last_dim("row_normalize", x);
  const std::size_t rows = d ? x.numel() / d : 0;
  std::vector<T> out(x.numel());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    T sq = 0;
    for (std::size_t j = 0; j < d; ++j) sq += in[j] * in[j];
    norms[r] = std::sqrt(sq);
    const T denom = norms[r] + eps;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[j] / denom;
  }
  return make_result<T>("row_normalize", x.shape(), std::move(out), {x},
                        [d, rows, eps, norms = std::move(norms)](Node<T>& self) {
                          T* g = self.parent_grad(0);
                          if (!g) return;
                          const T* xv = self.parent_data(0);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T n = norms[r];
                            // Exact zero rows come from masked tokens; the I/eps slope there
                            // would swamp every other gradient, so they pass none.
                            if (n == T(0)) continue;
                            const T denom = n + eps;
                            const T* gy = self.grad.data() + r * d;
                            const T* xr = xv + r * d;
                            T dot = 0;
                            for (std::size_t j = 0; j < d; ++j) dot += gy[j] * xr[j];
                            // d/dx (x / (|x| + eps)) = I/denom - x x^T / (|x| denom^2)
                            const T coef = dot / (n * denom * denom);
                            for (std::size_t j = 0; j < d; ++j)
                              g[r * d + j] += gy[j] / denom - coef * xr[j];
                          }
                        });
}

template <typename T>
Tensor<T> depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  require_matrix("depthwise_conv1d", x);
  require_matrix("depthwise_conv1d", kernel);
  const std::size_t len = x.dim(0), ch = x.dim(1), k = kernel.dim(0);
  if (k % 2 == 0) throw ConfigError("depthwise_conv1d: kernel width must be odd, got " +
                                    std::to_string(k));
  if (kernel.dim(1) != ch || bias.numel() != ch) {
    throw DimensionError("depthwise_conv1d: channel mismatch");
  }
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(len);
  std::vector<T> out(len * ch);
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    T* o = out.data() + t * ch;
    for (std::size_t c = 0; c < ch; ++c) o[c] = bias[c];
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - half;
      if (src < 0 || src >= n) continue;
      const T* in = x.data().data() + src * ch;
      const T* w = kernel.data().data() + j * ch;
      for (std::size_t c = 0; c < ch; ++c) o[c] += w[c] * in[c];
    }
  }
  return make_result<T>(
      "depthwise_conv1d", x.shape(), std::move(out), {x, kernel, bias},
      [n, ch, k, half](Node<T>& self) {
        const T* xv = self.parent_data(0);
        const T* wv = self.parent_data(1);
        T* gx = self.parent_grad(0);
        T* gw = self.parent_grad(1);
        T* gb = self.parent_grad(2);
        for (std::ptrdiff_t t = 0; t < n; ++t) {
          const T* gy = self.grad.data() + t * ch;
          if (gb)
            for (std::size_t c = 0; c < ch; ++c) gb[c] += gy[c];
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - half;
            if (src < 0 || src >= n) continue;
            for (std::size_t c = 0; c < ch; ++c) {
              if (gx) gx[src * ch + c] += gy[c] * wv[j * ch + c];
              if (gw) gw[j * ch + c] += gy[c] * xv[src * ch + c];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> causal_depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& kernel,
                                  const Tensor<T>& bias) {
  require_matrix("causal_depthwise_conv1d", x);
  require_matrix("causal_depthwise_conv1d", kernel);
  const std::size_t len = x.dim(0), ch = x.dim(1), k = kernel.dim(0);
  if (k == 0) throw ConfigError("causal_depthwise_conv1d: empty kernel");
  if (kernel.dim(1) != ch || bias.numel() != ch) {
    throw DimensionError("causal_depthwise_conv1d: channel mismatch");
  }
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(len);
  const std::ptrdiff_t lag0 = static_cast<std::ptrdiff_t>(k) - 1;
  std::vector<T> out(len * ch);
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    T* o = out.data() + t * ch;
    for (std::size_t c = 0; c < ch; ++c) o[c] = bias[c];
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - lag0;
      if (src < 0) continue;
      const T* in = x.data().data() + src * ch;
      const T* w = kernel.data().data() + j * ch;
      for (std::size_t c = 0; c < ch; ++c) o[c] += w[c] * in[c];
    }
  }
  return make_result<T>("causal_depthwise_conv1d", x.shape(), std::move(out), {x, kernel, bias},
                        [n, ch, k, lag0](Node<T>& self) {
                          const T* xv = self.parent_data(0);
                          const T* wv = self.parent_data(1);
                          T* gx = self.parent_grad(0);
                          T* gw = self.parent_grad(1);
                          T* gb = self.parent_grad(2);
                          for (std::ptrdiff_t t = 0; t < n; ++t) {
                            const T* gy = self.grad.data() + t * ch;
                            if (gb)
                              for (std::size_t c = 0; c < ch; ++c) gb[c] += gy[c];
                            for (std::size_t j = 0; j < k; ++j) {
                              const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - lag0;
                              if (src < 0) continue;
                              for (std::size_t c = 0; c < ch; ++c) {
                                if (gx) gx[src * ch + c] += gy[c] * wv[j * ch + c];
                                if (gw) gw[j * ch + c] += gy[c] * xv[src * ch + c];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_matrix("conv1d", x);
  if (weight.rank() != 3) throw DimensionError("conv1d: weight must be [K x C_in x C_out]");
  const std::size_t len = x.dim(0), cin = x.dim(1);
  const std::size_t k = weight.dim(0), cout = weight.dim(2);
  if (k % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(k));
  if (weight.dim(1) != cin) {
    throw ConfigError("conv1d: input has " + std::to_string(cin) + " channels, weight expects " +
                      std::to_string(weight.dim(1)));
  }
  if (bias.numel() != cout) throw DimensionError("conv1d: bias length mismatch");
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(len);
  std::vector<T> out(len * cout);
  for (std::ptrdiff_t t = 0; t < n; ++t)
    std::copy(bias.data().begin(), bias.data().end(), out.begin() + t * cout);
  for (std::size_t j = 0; j < k; ++j) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - half;
    const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(n, n - shift);
    if (t1 <= t0) continue;
    gemm_acc(x.data().data() + (t0 + shift) * cin, weight.data().data() + j * cin * cout,
             out.data() + t0 * cout, static_cast<std::size_t>(t1 - t0), cin, cout);
  }
  return make_result<T>(
      "conv1d", {len, cout}, std::move(out), {x, weight, bias},
      [n, cin, cout, k, half](Node<T>& self) {
        T* gx = self.parent_grad(0);
        T* gw = self.parent_grad(1);
        T* gb = self.parent_grad(2);
        if (gb)
          for (std::ptrdiff_t t = 0; t < n; ++t)
            for (std::size_t c = 0; c < cout; ++c) gb[c] += self.grad[t * cout + c];
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - half;
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
          const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(n, n - shift);
          if (t1 <= t0) continue;
          gemm_backward(self.parent_data(0) + (t0 + shift) * cin,
                        self.parent_data(1) + j * cin * cout, self.grad.data() + t0 * cout,
                        gx ? gx + (t0 + shift) * cin : nullptr, gw ? gw + j * cin * cout : nullptr,
                        static_cast<std::size_t>(t1 - t0), cin, cout);
        }
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = last_dim("layer_norm", x);
  if (d == 0) throw DimensionError("layer_norm: zero-width feature axis");
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: gamma/beta length mismatch");
  }
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gamma[j] + beta[j];
    }
  }
  return make_result<T>(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        const T* gv = self.parent_data(1);
        T* gx = self.parent_grad(0);
        T* ggamma = self.parent_grad(1);
        T* gbeta = self.parent_grad(2);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gy = self.grad.data() + r * d;
          const T* xh = xhat.data() + r * d;
          T sum_g = 0, sum_gx = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const T gh = gy[j] * gv[j];
            sum_g += gh;
            sum_gx += gh * xh[j];
            if (ggamma) ggamma[j] += gy[j] * xh[j];
            if (gbeta) gbeta[j] += gy[j];
          }
          if (gx) {
            const T inv_d = T(1) / static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T gh = gy[j] * gv[j];
              gx[r * d + j] += inv_std[r] * (gh - inv_d * sum_g - xh[j] * inv_d * sum_gx);
            }
          }
        }
      });
}

#define HCMEN_INSTANTIATE(T)                                                                   \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                            \
  template Tensor<T> add_channel<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul_channel<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                           \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> activation<T>(const Tensor<T>&, Activation);                              \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                             \
  template Tensor<T> log_softmax<T>(const Tensor<T>&);                                         \
  template Tensor<T> mean_axis<T>(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                \
  template Tensor<T> reverse_time<T>(const Tensor<T>&);                                        \
  template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);                            \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<std::size_t>&);        \
  template Tensor<T> slice_cols<T>(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                      \
  template Tensor<T> diagonal<T>(const Tensor<T>&);                                            \
  template Tensor<T> row_normalize<T>(const Tensor<T>&, T);                                    \
  template Tensor<T> depthwise_conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> causal_depthwise_conv1d<T>(const Tensor<T>&, const Tensor<T>&,            \
                                                const Tensor<T>&);                             \
  template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);

HCMEN_INSTANTIATE(float)
HCMEN_INSTANTIATE(double)
HCMEN_INSTANTIATE(long double)
#undef HCMEN_INSTANTIATE

}  // namespace hcmen
