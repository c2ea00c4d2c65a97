#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hcmen/tensor.hpp"

namespace hcmen {

// Below this magnitude the ZOH input coefficient uses its a -> 0 limit.
inline constexpr double kZohSmallA = 1e-8;

template <typename T>
struct ZohStep {
  T a_bar;
  T b_bar;
};

// Zero-order hold for one diagonal state coordinate:
//   a_bar = exp(delta * a),  b_bar = (exp(delta * a) - 1) / a * b
// delta == 0 is the zero-length hold (1, 0); negative delta is rejected.
template <typename T>
ZohStep<T> discretize_zoh(T a, T b, T delta);

// Discretized diagonal SSM for a single channel. `steps == 1` is the
// time-invariant case; otherwise every coefficient array is [steps x states].
template <typename T>
struct DiscreteSsm {
  std::size_t states = 0;
  std::size_t steps = 1;
  std::vector<T> a_bar;
  std::vector<T> b_bar;
  std::vector<T> c;

  bool time_invariant() const { return steps == 1; }
};

template <typename T>
DiscreteSsm<T> discretize_lti(std::span<const T> a, std::span<const T> b, std::span<const T> c,
                              T delta);

// h_t = a_bar h_{t-1} + b_bar x_t, y_t = <c, h_t>, h_0 = 0.
template <typename T>
std::vector<T> recurrent_scan(const DiscreteSsm<T>& ssm, std::span<const T> x);

// k[j] = sum_n c[n] a_bar[n]^j b_bar[n] for j < length. Requires a
// time-invariant system.
template <typename T>
std::vector<T> lti_kernel(const DiscreteSsm<T>& ssm, std::size_t length);

// y[t] = sum_{j <= t} k[j] x[t - j].
template <typename T>
std::vector<T> causal_convolve(std::span<const T> x, std::span<const T> kernel);

// Input-dependent SSM over D_inner channels with N states each.
template <typename T>
struct SsmParams {
  Tensor<T> a_log;      // [D_inner x N], A = -exp(a_log)
  Tensor<T> dt_weight;  // [D_inner x D_inner]
  Tensor<T> dt_bias;    // [D_inner]
  Tensor<T> b_weight;   // [D_inner x N]
  Tensor<T> c_weight;   // [D_inner x N]
  Tensor<T> d_skip;     // [D_inner]
};

template <typename T>
SsmParams<T> make_ssm_params(ParamStore<T>& store, const std::string& prefix,
                             std::size_t inner_dim, std::size_t state_dim, std::mt19937_64& rng);

// Fused recurrence with per-step ZOH. x, delta: [L x D_inner]; a: [D_inner x N]
// (already negative); b, c: [L x N]. Backward replays the stored states.
template <typename T>
Tensor<T> scan_kernel(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& a,
                      const Tensor<T>& b, const Tensor<T>& c);

// delta = softplus(x W_dt + b_dt), B_t = x W_b, C_t = x W_c, then the scan plus
// the d_skip feed-through.
template <typename T>
Tensor<T> selective_scan(const SsmParams<T>& params, const Tensor<T>& x);

struct MambaDims {
  std::size_t model_dim = 32;
  std::size_t inner_dim = 64;
  std::size_t state_dim = 8;
  std::size_t conv_width = 4;
};

template <typename T>
struct MambaBlockParams {
  MambaDims dims;
  Tensor<T> in_weight;    // [D x 2 D_inner], value then gate columns
  Tensor<T> conv_kernel;  // [K_m x D_inner], causal
  Tensor<T> conv_bias;    // [D_inner]
  SsmParams<T> ssm;
  Tensor<T> out_weight;   // [D_inner x D]
};

template <typename T>
MambaBlockParams<T> make_mamba_block(ParamStore<T>& store, const std::string& prefix,
                                     const MambaDims& dims, std::mt19937_64& rng);

// out_proj(selective_scan(silu(causal_conv(value))) * silu(gate))
template <typename T>
Tensor<T> mamba_block(const MambaBlockParams<T>& params, const Tensor<T>& x);

template <typename T>
struct BiMambaParams {
  MambaBlockParams<T> forward;
  MambaBlockParams<T> backward;
};

// `tied` reuses the forward branch tensors for the backward branch.
template <typename T>
BiMambaParams<T> make_bi_mamba(ParamStore<T>& store, const std::string& prefix,
                               const MambaDims& dims, std::mt19937_64& rng, bool tied = false);

// forward(x) + reverse(backward(reverse(x)))
template <typename T>
Tensor<T> bi_mamba(const BiMambaParams<T>& params, const Tensor<T>& x);

}  // namespace hcmen
