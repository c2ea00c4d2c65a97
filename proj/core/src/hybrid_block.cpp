#include "hcmen/hybrid_block.hpp"

#include "hcmen/init.hpp"
#include "hcmen/ops.hpp"

namespace hcmen {

template <typename T>
HybridBlockParams<T> make_hybrid_block(ParamStore<T>& store, const std::string& prefix,
                                       const HybridBlockConfig& config, std::mt19937_64& rng) {
  HybridBlockParams<T> p;
  p.config = config;
  const std::size_t d = config.dim;
  if (config.use_local) {
    p.local_gamma = store.add(prefix + ".local.ln_gamma", Tensor<T>::full({d}, T(1)));
    p.local_beta = store.add(prefix + ".local.ln_beta", Tensor<T>::zeros({d}));
    p.conv_kernel = store.add(prefix + ".local.conv_kernel",
                              fan_in_tensor<T>({config.conv_width, d}, config.conv_width, rng));
    p.conv_bias = store.add(prefix + ".local.conv_bias", Tensor<T>::zeros({d}));
  }
  if (config.use_global) {
    p.global_gamma = store.add(prefix + ".global.ln_gamma", Tensor<T>::full({d}, T(1)));
    p.global_beta = store.add(prefix + ".global.ln_beta", Tensor<T>::zeros({d}));
    auto dims = config.mamba;
    dims.model_dim = d;
    p.mamba = make_bi_mamba<T>(store, prefix + ".global.bimamba", dims, rng);
  }
  return p;
}

template <typename T>
Tensor<T> hybrid_block(const HybridBlockParams<T>& params, const Tensor<T>& x) {
  const T eps = static_cast<T>(params.config.ln_eps);
  Tensor<T> h = x;
  if (params.config.use_local) {
    auto normed = layer_norm(h, params.local_gamma, params.local_beta, eps);
    h = add(h, depthwise_conv1d(normed, params.conv_kernel, params.conv_bias));
  }
  if (params.config.use_global) {
    auto normed = layer_norm(h, params.global_gamma, params.global_beta, eps);
    h = add(h, bi_mamba(params.mamba, normed));
  }
  return h;
}

template HybridBlockParams<float> make_hybrid_block<float>(ParamStore<float>&, const std::string&,
                                                           const HybridBlockConfig&,
                                                           std::mt19937_64&);
template HybridBlockParams<double> make_hybrid_block<double>(ParamStore<double>&,
                                                             const std::string&,
                                                             const HybridBlockConfig&,
                                                             std::mt19937_64&);
template Tensor<float> hybrid_block<float>(const HybridBlockParams<float>&, const Tensor<float>&);
template Tensor<double> hybrid_block<double>(const HybridBlockParams<double>&,
                                             const Tensor<double>&);

template HybridBlockParams<long double> make_hybrid_block<long double>(
    ParamStore<long double>&, const std::string&, const HybridBlockConfig&, std::mt19937_64&);
template Tensor<long double> hybrid_block<long double>(const HybridBlockParams<long double>&,
                                                       const Tensor<long double>&);

}  // namespace hcmen
