#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "hcmen/ssm.hpp"
#include "hcmen/tensor.hpp"

namespace hcmen {

// Residual local stage (LN + depthwise conv) followed by a residual global
// stage (LN + Bi-Mamba). Either stage can be switched off for ablations, in
// which case its parameters are never created.
struct HybridBlockConfig {
  std::size_t dim = 32;
  std::size_t conv_width = 3;
  bool use_local = true;
  bool use_global = true;
  MambaDims mamba;
  double ln_eps = 1e-5;
};

template <typename T>
struct HybridBlockParams {
  HybridBlockConfig config;
  Tensor<T> local_gamma, local_beta;
  Tensor<T> conv_kernel, conv_bias;
  Tensor<T> global_gamma, global_beta;
  BiMambaParams<T> mamba;
};

template <typename T>
HybridBlockParams<T> make_hybrid_block(ParamStore<T>& store, const std::string& prefix,
                                       const HybridBlockConfig& config, std::mt19937_64& rng);

// local  = x + dwconv(LN(x))
// global = local + bi_mamba(LN(local))
template <typename T>
Tensor<T> hybrid_block(const HybridBlockParams<T>& params, const Tensor<T>& x);

}  // namespace hcmen
