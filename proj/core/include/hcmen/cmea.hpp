#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hcmen/tensor.hpp"

namespace hcmen {

// Added to every norm in the cosine similarity; a zero token scores 0.
inline constexpr double kCosineEps = 1e-12;

template <typename T>
struct MixResult {
  Tensor<T> mixed;
  std::vector<std::uint8_t> replaced;  // 1 where the text token was taken
};

// Per token i draw p ~ U[0, 1); take U_t[i] when p >= p_star, else U_m[i].
// The output rows are exact copies of one of the two sources.
template <typename T>
MixResult<T> mix_tokens(const Tensor<T>& modality, const Tensor<T>& text, double p_star,
                        std::mt19937_64& rng);

// Tokenwise two-layer perceptron D -> D_h -> D with SiLU.
template <typename T>
struct ProxyMlp {
  Tensor<T> fc1_weight, fc1_bias;
  Tensor<T> fc2_weight, fc2_bias;
};

template <typename T>
ProxyMlp<T> make_proxy_mlp(ParamStore<T>& store, const std::string& prefix, std::size_t dim,
                           std::size_t hidden, std::mt19937_64& rng);

template <typename T>
Tensor<T> proxy_forward(const Tensor<T>& mixed, const ProxyMlp<T>& mlp);

// (1/L) sum_i cos(E[i], U[i]) as a differentiable scalar.
template <typename T>
Tensor<T> token_avg_cosine(const Tensor<T>& proxy, const Tensor<T>& text);

// [B x B] matrix sim(E_i, U_j) of token-averaged cosines.
template <typename T>
Tensor<T> similarity_matrix(const std::vector<Tensor<T>>& proxies,
                            const std::vector<Tensor<T>>& texts);

// 1/2 * sum over m in {v, a} of the in-batch InfoNCE with text negatives.
template <typename T>
Tensor<T> infonce_loss(const std::vector<Tensor<T>>& vision_proxies,
                       const std::vector<Tensor<T>>& audio_proxies,
                       const std::vector<Tensor<T>>& texts, double temperature);

// One modality's term: mean_i -log softmax(sim / tau)[i, i].
template <typename T>
Tensor<T> infonce_term(const std::vector<Tensor<T>>& proxies, const std::vector<Tensor<T>>& texts,
                       double temperature);

}  // namespace hcmen
