#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "hcmen/hybrid_block.hpp"
#include "hcmen/tensor.hpp"

namespace hcmen {

// Per time step the fused sequence holds (vision, text, audio), so fused row
// 3i + k comes from modality slot k at step i.
inline constexpr std::size_t kFusedSlots = 3;

template <typename T>
Tensor<T> interleave(const Tensor<T>& vision, const Tensor<T>& text, const Tensor<T>& audio);

// Inverse of interleave: {vision, text, audio}.
template <typename T>
std::array<Tensor<T>, 3> deinterleave(const Tensor<T>& fused);

template <typename T>
struct HeadParams {
  Tensor<T> weight;  // [D x 1]
  Tensor<T> bias;    // [1]
};

template <typename T>
struct FusionParams {
  std::vector<HybridBlockParams<T>> blocks;
  HeadParams<T> head;
};

template <typename T>
FusionParams<T> make_fusion(ParamStore<T>& store, const std::string& prefix, std::size_t depth,
                            const HybridBlockConfig& block, std::mt19937_64& rng);

// F_1 = block_1(M), ..., F_Z = block_Z(F_{Z-1})
template <typename T>
Tensor<T> fuse(const FusionParams<T>& params, const Tensor<T>& fused);

// w . mean_rows(F) + b, shape [1].
template <typename T>
Tensor<T> pool_predict(const Tensor<T>& fused, const HeadParams<T>& head);

// mean_b (pred_b - y_b)^2
template <typename T>
Tensor<T> prediction_loss(const Tensor<T>& preds, const std::vector<float>& labels);

// loss_p + alpha * loss_c; an undefined loss_c counts as zero.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& loss_p, const Tensor<T>& loss_c, double alpha);

}  // namespace hcmen
