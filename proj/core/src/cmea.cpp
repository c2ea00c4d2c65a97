#include "hcmen/cmea.hpp"

#include "hcmen/error.hpp"
#include "hcmen/init.hpp"
#include "hcmen/ops.hpp"

namespace hcmen {

template <typename T>
MixResult<T> mix_tokens(const Tensor<T>& modality, const Tensor<T>& text, double p_star,
                        std::mt19937_64& rng) {
  if (modality.shape() != text.shape() || modality.rank() != 2) {
    throw DimensionError("mix_tokens: shape mismatch " + shape_to_string(modality.shape()) +
                         " vs " + shape_to_string(text.shape()));
  }
  if (!(p_star >= 0.0 && p_star <= 1.0)) throw ContractError("mix_tokens: p* outside [0, 1]");
  const std::size_t len = modality.dim(0);
  std::uniform_real_distribution<double> draw(0.0, 1.0);
  MixResult<T> result;
  result.replaced.resize(len);
  std::vector<std::size_t> rows(len);
  for (std::size_t i = 0; i < len; ++i) {
    const bool take_text = draw(rng) >= p_star;
    result.replaced[i] = take_text ? 1 : 0;
    rows[i] = take_text ? len + i : i;
  }
  result.mixed = gather_rows(concat_rows<T>({modality, text}), rows);
  return result;
}

template <typename T>
ProxyMlp<T> make_proxy_mlp(ParamStore<T>& store, const std::string& prefix, std::size_t dim,
                           std::size_t hidden, std::mt19937_64& rng) {
  ProxyMlp<T> p;
  p.fc1_weight = store.add(prefix + ".fc1_weight", fan_in_tensor<T>({dim, hidden}, dim, rng));
  p.fc1_bias = store.add(prefix + ".fc1_bias", fan_in_tensor<T>({hidden}, dim, rng));
  p.fc2_weight = store.add(prefix + ".fc2_weight", fan_in_tensor<T>({hidden, dim}, hidden, rng));
  p.fc2_bias = store.add(prefix + ".fc2_bias", fan_in_tensor<T>({dim}, hidden, rng));
  return p;
}

template <typename T>
Tensor<T> proxy_forward(const Tensor<T>& mixed, const ProxyMlp<T>& mlp) {
  auto hidden = silu(linear(mixed, mlp.fc1_weight, mlp.fc1_bias));
  return linear(hidden, mlp.fc2_weight, mlp.fc2_bias);
}

template <typename T>
Tensor<T> token_avg_cosine(const Tensor<T>& proxy, const Tensor<T>& text) {
  if (proxy.shape() != text.shape() || proxy.rank() != 2) {
    throw DimensionError("token_avg_cosine: shape mismatch");
  }
  const T eps = static_cast<T>(kCosineEps);
  auto dots = sum(mul(row_normalize(proxy, eps), row_normalize(text, eps)));
  return scale(dots, T(1) / static_cast<T>(proxy.dim(0)));
}

namespace {

// Rows of the result are the flattened, per-token normalized inputs.
template <typename T>
Tensor<T> stack_normalized(const std::vector<Tensor<T>>& items) {
  std::vector<Tensor<T>> rows;
  rows.reserve(items.size());
  const Shape& shape = items.front().shape();
  for (const auto& item : items) {
    if (item.shape() != shape || item.rank() != 2) {
      throw DimensionError("similarity: all token matrices must share one [L x D] shape");
    }
    rows.push_back(reshape(row_normalize(item, static_cast<T>(kCosineEps)), {1, item.numel()}));
  }
  return concat_rows(rows);
}

}  // namespace

template <typename T>
Tensor<T> similarity_matrix(const std::vector<Tensor<T>>& proxies,
                            const std::vector<Tensor<T>>& texts) {
  if (proxies.empty() || proxies.size() != texts.size()) {
    throw DimensionError("similarity_matrix: need equal, non-empty batches");
  }
  if (proxies.front().shape() != texts.front().shape()) {
    throw DimensionError("similarity_matrix: proxy and text shapes differ");
  }
  const std::size_t len = proxies.front().dim(0);
  auto sims = matmul(stack_normalized(proxies), transpose(stack_normalized(texts)));
  return scale(sims, T(1) / static_cast<T>(len));
}

template <typename T>
Tensor<T> infonce_term(const std::vector<Tensor<T>>& proxies, const std::vector<Tensor<T>>& texts,
                       double temperature) {
  if (!(temperature > 0.0)) throw ContractError("infonce: temperature must be positive");
  auto logits = scale(similarity_matrix(proxies, texts), static_cast<T>(1.0 / temperature));
  return scale(mean(diagonal(log_softmax(logits))), T(-1));
}

template <typename T>
Tensor<T> infonce_loss(const std::vector<Tensor<T>>& vision_proxies,
                       const std::vector<Tensor<T>>& audio_proxies,
                       const std::vector<Tensor<T>>& texts, double temperature) {
  auto vision = infonce_term(vision_proxies, texts, temperature);
  auto audio = infonce_term(audio_proxies, texts, temperature);
  return scale(add(vision, audio), T(0.5));
}

#define HCMEN_INSTANTIATE(T)                                                                   \
  template MixResult<T> mix_tokens<T>(const Tensor<T>&, const Tensor<T>&, double,              \
                                      std::mt19937_64&);                                       \
  template ProxyMlp<T> make_proxy_mlp<T>(ParamStore<T>&, const std::string&, std::size_t,      \
                                         std::size_t, std::mt19937_64&);                       \
  template Tensor<T> proxy_forward<T>(const Tensor<T>&, const ProxyMlp<T>&);                   \
  template Tensor<T> token_avg_cosine<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> similarity_matrix<T>(const std::vector<Tensor<T>>&,                       \
                                          const std::vector<Tensor<T>>&);                      \
  template Tensor<T> infonce_term<T>(const std::vector<Tensor<T>>&,                            \
                                     const std::vector<Tensor<T>>&, double);                   \
  template Tensor<T> infonce_loss<T>(const std::vector<Tensor<T>>&,                            \
                                     const std::vector<Tensor<T>>&,                            \
                                     const std::vector<Tensor<T>>&, double);

HCMEN_INSTANTIATE(float)
HCMEN_INSTANTIATE(double)
HCMEN_INSTANTIATE(long double)
#undef HCMEN_INSTANTIATE

}  // namespace hcmen
