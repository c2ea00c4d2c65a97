#include "hcmen/fusion.hpp"

#include "hcmen/error.hpp"
#include "hcmen/init.hpp"
#include "hcmen/ops.hpp"

namespace hcmen {

template <typename T>
Tensor<T> interleave(const Tensor<T>& vision, const Tensor<T>& text, const Tensor<T>& audio) {
  if (vision.shape() != text.shape() || audio.shape() != text.shape() || text.rank() != 2) {
    throw DimensionError("interleave: modality shapes differ: " +
                         shape_to_string(vision.shape()) + ", " + shape_to_string(text.shape()) +
                         ", " + shape_to_string(audio.shape()));
  }
  const std::size_t len = text.dim(0);
  std::vector<std::size_t> order(kFusedSlots * len);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t k = 0; k < kFusedSlots; ++k) order[kFusedSlots * i + k] = k * len + i;
  return gather_rows(concat_rows<T>({vision, text, audio}), order);
}

template <typename T>
std::array<Tensor<T>, 3> deinterleave(const Tensor<T>& fused) {
  if (fused.rank() != 2 || fused.dim(0) % kFusedSlots != 0) {
    throw DimensionError("deinterleave: row count must be a multiple of 3");
  }
  const std::size_t len = fused.dim(0) / kFusedSlots;
  std::array<Tensor<T>, 3> parts;
  for (std::size_t k = 0; k < kFusedSlots; ++k) {
    std::vector<std::size_t> rows(len);
    for (std::size_t i = 0; i < len; ++i) rows[i] = kFusedSlots * i + k;
    parts[k] = gather_rows(fused, rows);
  }
  return parts;
}

template <typename T>
FusionParams<T> make_fusion(ParamStore<T>& store, const std::string& prefix, std::size_t depth,
                            const HybridBlockConfig& block, std::mt19937_64& rng) {
  if (depth == 0) throw ConfigError("fusion needs at least one block");
  FusionParams<T> p;
  for (std::size_t z = 0; z < depth; ++z) {
    p.blocks.push_back(make_hybrid_block<T>(store, prefix + ".block" + std::to_string(z), block, rng));
  }
  p.head.weight = store.add("head.weight", fan_in_tensor<T>({block.dim, 1}, block.dim, rng));
  p.head.bias = store.add("head.bias", Tensor<T>::zeros({1}));
  return p;
}

template <typename T>
Tensor<T> fuse(const FusionParams<T>& params, const Tensor<T>& fused) {
  Tensor<T> h = fused;
  for (const auto& block : params.blocks) h = hybrid_block(block, h);
  return h;
}

template <typename T>
Tensor<T> pool_predict(const Tensor<T>& fused, const HeadParams<T>& head) {
  auto pooled = reshape(mean_axis(fused, 0), {1, fused.dim(1)});
  return reshape(linear(pooled, head.weight, head.bias), {1});
}

template <typename T>
Tensor<T> prediction_loss(const Tensor<T>& preds, const std::vector<float>& labels) {
  if (preds.numel() != labels.size() || labels.empty()) {
    throw DimensionError("prediction_loss: " + std::to_string(preds.numel()) +
                         " predictions for " + std::to_string(labels.size()) + " labels");
  }
  std::vector<T> y(labels.begin(), labels.end());
  auto diff = sub(preds, Tensor<T>(preds.shape(), std::move(y)));
  return mean(mul(diff, diff));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& loss_p, const Tensor<T>& loss_c, double alpha) {
  if (!(alpha >= 0.0)) throw ContractError("total_loss: alpha must be non-negative");
  if (!loss_c.defined() || alpha == 0.0) return loss_p;
  return add(loss_p, scale(loss_c, static_cast<T>(alpha)));
}

#define HCMEN_INSTANTIATE(T)                                                                   \
  template Tensor<T> interleave<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template std::array<Tensor<T>, 3> deinterleave<T>(const Tensor<T>&);                         \
  template FusionParams<T> make_fusion<T>(ParamStore<T>&, const std::string&, std::size_t,     \
                                          const HybridBlockConfig&, std::mt19937_64&);         \
  template Tensor<T> fuse<T>(const FusionParams<T>&, const Tensor<T>&);                        \
  template Tensor<T> pool_predict<T>(const Tensor<T>&, const HeadParams<T>&);                  \
  template Tensor<T> prediction_loss<T>(const Tensor<T>&, const std::vector<float>&);          \
  template Tensor<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, double);

HCMEN_INSTANTIATE(float)
HCMEN_INSTANTIATE(double)
HCMEN_INSTANTIATE(long double)
#undef HCMEN_INSTANTIATE

}  // namespace hcmen
