#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "hcmen/modality.hpp"

namespace hcmen {

// Every hyperparameter and ablation switch of the model and its training run.
// Serialized as a flat JSON object whose keys are the field names below.
struct ModelConfig {
  std::size_t seq_len = 16;         // L
  std::size_t model_dim = 32;       // D
  std::size_t state_dim = 8;        // N
  std::size_t inner_dim = 64;       // D_inner
  std::size_t fusion_depth = 2;     // Z
  std::size_t mamba_conv_width = 4; // K_m
  std::size_t proj_width = 1;       // K_p
  std::size_t conv_width = 3;       // local depthwise conv, encoder and fusion
  std::size_t encoder_depth = 1;
  double mix_threshold = 0.5;       // p*
  double temperature = 0.1;         // tau
  double alpha = 0.1;
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 50;
  double missing_rate = 0.0;
  std::uint64_t seed = 0;
  bool disable_cnn = false;
  bool disable_mamba = false;
  bool disable_cmea = false;
  CorruptionMode corruption_mode = CorruptionMode::Token;
  bool substitute_noise = false;
  // Feature width per modality (text, vision, audio); 0 = take from the dataset.
  std::array<std::size_t, kNumModalities> input_dims{0, 0, 0};

  // Throws ConfigError naming the first offending field.
  void validate() const;
  // alpha as applied to the loss (0 when CMEA is disabled).
  double effective_alpha() const { return disable_cmea ? 0.0 : alpha; }
  CorruptionOptions corruption() const { return {corruption_mode, substitute_noise}; }
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

std::string config_to_json(const ModelConfig& config, int indent = 2);
// Missing keys keep their defaults; unknown keys and ill-typed values raise
// ConfigError. The result is validated.
ModelConfig config_from_json(const std::string& text);
ModelConfig load_config_file(const std::string& path);

}  // namespace hcmen
