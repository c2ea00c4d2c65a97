#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "hcmen/cmea.hpp"
#include "hcmen/config.hpp"
#include "hcmen/fusion.hpp"
#include "hcmen/modality.hpp"
#include "hcmen/tensor.hpp"

namespace hcmen {

struct ForwardOptions {
  // Token mixing with text is only applied when training.
  bool training = false;
  std::uint64_t mix_seed = 0;
};

template <typename T>
struct ForwardResult {
  Tensor<T> preds;       // [B]
  Tensor<T> loss_p;      // scalar MSE
  Tensor<T> loss_c;      // scalar InfoNCE; undefined when CMEA is disabled
  Tensor<T> loss_total;  // loss_p + alpha * loss_c
};

// Full network: three unimodal encoders, the CMEA proxies for vision and
// audio, the interleaved fusion stack and the regression head. Parameters are
// built from the config (input_dims must be filled in) with config.seed.
template <typename T>
class HcmenModel {
 public:
  explicit HcmenModel(const ModelConfig& config);
  HcmenModel(const HcmenModel&) = delete;
  HcmenModel& operator=(const HcmenModel&) = delete;
  HcmenModel(HcmenModel&&) noexcept = default;
  HcmenModel& operator=(HcmenModel&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  std::size_t parameter_count() const { return store_.total_elements(); }

  // U_m for one sample and modality.
  Tensor<T> encode(Modality m, const FeatureSequence& seq) const;

  ForwardResult<T> forward(const ModalityBatch& batch, const ForwardOptions& options = {}) const;

 private:
  ModelConfig config_;
  ParamStore<T> store_;
  std::array<EncoderParams<T>, kNumModalities> encoders_;
  std::optional<std::array<ProxyMlp<T>, 2>> proxies_;  // vision, audio
  FusionParams<T> fusion_;
};

extern template class HcmenModel<float>;
extern template class HcmenModel<double>;
extern template class HcmenModel<long double>;

}  // namespace hcmen
