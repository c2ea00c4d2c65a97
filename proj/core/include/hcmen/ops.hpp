#pragma once

#include <cstddef>
#include <vector>

#include "hcmen/tensor.hpp"

namespace hcmen {

// Arguments of exp and softplus are clamped to [-kExpClamp, kExpClamp]
// before exponentiation.
inline constexpr double kExpClamp = 30.0;

enum class Activation { Exp, Softplus, Silu, Tanh, Sigmoid };

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

// x[..., D] combined with a per-channel vector v[D].
template <typename T> Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& v);
template <typename T> Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& v);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
// x[M x in] * w[in x out] (+ bias[out] when defined).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias = {});

template <typename T> Tensor<T> activation(const Tensor<T>& x, Activation kind);
template <typename T> Tensor<T> exp(const Tensor<T>& x) { return activation(x, Activation::Exp); }
template <typename T> Tensor<T> softplus(const Tensor<T>& x) { return activation(x, Activation::Softplus); }
template <typename T> Tensor<T> silu(const Tensor<T>& x) { return activation(x, Activation::Silu); }
template <typename T> Tensor<T> tanh(const Tensor<T>& x) { return activation(x, Activation::Tanh); }
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x) { return activation(x, Activation::Sigmoid); }

// Last-axis softmax / log-softmax with max subtraction.
template <typename T> Tensor<T> softmax(const Tensor<T>& x);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x);

template <typename T> Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// Row (time) reversal of a matrix.
template <typename T> Tensor<T> reverse_time(const Tensor<T>& x);

// Matrix row plumbing.
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> diagonal(const Tensor<T>& x);
// Divides every row by (its L2 norm + eps).
template <typename T> Tensor<T> row_normalize(const Tensor<T>& x, T eps);

// Depthwise "same" convolution over time; kernel[K x D] with K odd and zero
// padding of K/2 on both sides.
template <typename T>
Tensor<T> depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias);
// Depthwise causal convolution: K-1 zeros on the left, output[t] only sees
// x[t-K+1 .. t]. kernel[K-1] multiplies the current step.
template <typename T>
Tensor<T> causal_depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& kernel,
                                  const Tensor<T>& bias);
// Dense "same" convolution: x[L x C_in], weight[K x C_in x C_out], bias[C_out].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Normalization over the last axis followed by gamma/beta affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

}  // namespace hcmen
