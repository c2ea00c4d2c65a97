#include "hcmen/model.hpp"

#include <random>

#include "hcmen/error.hpp"
#include "hcmen/ops.hpp"

namespace hcmen {

namespace {

HybridBlockConfig block_config(const ModelConfig& c) {
  HybridBlockConfig b;
  b.dim = c.model_dim;
  b.conv_width = c.conv_width;
  b.use_local = !c.disable_cnn;
  b.use_global = !c.disable_mamba;
  b.mamba.model_dim = c.model_dim;
  b.mamba.inner_dim = c.inner_dim;
  b.mamba.state_dim = c.state_dim;
  b.mamba.conv_width = c.mamba_conv_width;
  return b;
}

}  // namespace

template <typename T>
HcmenModel<T>::HcmenModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  for (auto m : kModalities) {
    if (config_.input_dims[index_of(m)] == 0) {
      throw ConfigError("invalid config field 'input_dims': width of " +
                        std::string(modality_name(m)) + " is unset");
    }
  }
  std::mt19937_64 rng(config_.seed);
  const auto block = block_config(config_);
  for (auto m : kModalities) {
    EncoderConfig enc;
    enc.input_dim = config_.input_dims[index_of(m)];
    enc.model_dim = config_.model_dim;
    enc.seq_len = config_.seq_len;
    enc.proj_width = config_.proj_width;
    enc.depth = config_.encoder_depth;
    enc.block = block;
    encoders_[index_of(m)] =
        make_encoder<T>(store_, "encoder." + std::string(modality_name(m)), enc, rng);
  }
  if (!config_.disable_cmea) {
    const std::size_t hidden = 2 * config_.model_dim;
    proxies_ = std::array<ProxyMlp<T>, 2>{
        make_proxy_mlp<T>(store_, "cmea.vision", config_.model_dim, hidden, rng),
        make_proxy_mlp<T>(store_, "cmea.audio", config_.model_dim, hidden, rng)};
  }
  fusion_ = make_fusion<T>(store_, "fusion", config_.fusion_depth, block, rng);
}

template <typename T>
Tensor<T> HcmenModel<T>::encode(Modality m, const FeatureSequence& seq) const {
  return encode_sequence(seq, encoders_[index_of(m)]);
}

template <typename T>
ForwardResult<T> HcmenModel<T>::forward(const ModalityBatch& batch,
                                        const ForwardOptions& options) const {
  batch.validate();
  const std::size_t n = batch.size();
  if (n == 0) throw EmptyInputError("forward: empty batch");

  std::mt19937_64 mix_rng(options.mix_seed);
  std::vector<Tensor<T>> texts, vision_proxies, audio_proxies, preds;
  texts.reserve(n);
  preds.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto text = encode(Modality::Text, batch.at(Modality::Text, i));
    auto vision = encode(Modality::Vision, batch.at(Modality::Vision, i));
    auto audio = encode(Modality::Audio, batch.at(Modality::Audio, i));
    if (proxies_) {
      if (options.training) {
        vision = mix_tokens(vision, text, config_.mix_threshold, mix_rng).mixed;
        audio = mix_tokens(audio, text, config_.mix_threshold, mix_rng).mixed;
      }
      vision = proxy_forward(vision, (*proxies_)[0]);
      audio = proxy_forward(audio, (*proxies_)[1]);
      vision_proxies.push_back(vision);
      audio_proxies.push_back(audio);
    }
    texts.push_back(text);
    auto fused = fuse(fusion_, interleave(vision, text, audio));
    preds.push_back(reshape(pool_predict(fused, fusion_.head), {1, 1}));
  }

  ForwardResult<T> result;
  result.preds = reshape(concat_rows(preds), {n});
  result.loss_p = prediction_loss(result.preds, batch.labels);
  if (proxies_) {
    result.loss_c = infonce_loss(vision_proxies, audio_proxies, texts, config_.temperature);
  }
  result.loss_total = total_loss(result.loss_p, result.loss_c, config_.effective_alpha());
  return result;
}

template class HcmenModel<float>;
template class HcmenModel<double>;
template class HcmenModel<long double>;

}  // namespace hcmen
