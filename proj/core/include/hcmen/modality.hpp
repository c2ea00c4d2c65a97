#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hcmen/hybrid_block.hpp"
#include "hcmen/tensor.hpp"

namespace hcmen {

enum class Modality : std::size_t { Text = 0, Vision = 1, Audio = 2 };

inline constexpr std::array<Modality, 3> kModalities{Modality::Text, Modality::Vision,
                                                     Modality::Audio};
inline constexpr std::size_t kNumModalities = 3;

std::string_view modality_name(Modality m);
inline std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

// One utterance's stream for one modality: `steps` rows of `dims` features
// and a per-row availability bit.
struct FeatureSequence {
  std::size_t steps = 0;
  std::size_t dims = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> mask;

  static FeatureSequence from_values(std::size_t steps, std::size_t dims, std::vector<float> values);
};

// T_m varies per utterance, so each modality holds one sequence per sample
// rather than a padded [B x T_m x D_m] block.
struct ModalityBatch {
  std::vector<std::string> ids;
  std::vector<float> labels;
  std::array<std::vector<FeatureSequence>, kNumModalities> features;

  std::size_t size() const { return labels.size(); }
  const FeatureSequence& at(Modality m, std::size_t sample) const {
    return features[index_of(m)][sample];
  }
  // Throws DimensionError/ContractError if counts, shapes or labels are off.
  void validate() const;
};

enum class CorruptionMode { Token, WholeModality };

struct CorruptionOptions {
  CorruptionMode mode = CorruptionMode::Token;
  // Replace dropped rows with N(0, 1) noise instead of zeros.
  bool substitute_noise = false;
};

// Drops each token (or whole modality stream) of every modality independently
// with probability `rate`: features zeroed (or substituted) and mask cleared.
ModalityBatch corrupt(const ModalityBatch& batch, double rate, std::uint64_t seed,
                      const CorruptionOptions& options = {});

template <typename T>
Tensor<T> to_tensor(const FeatureSequence& seq);

// Linear interpolation of the rows of x[T x D'] onto `target_len` uniformly
// spaced positions spanning [0, T-1]; identity when T == target_len.
template <typename T>
Tensor<T> resample_time(const Tensor<T>& x, std::size_t target_len);

struct EncoderConfig {
  std::size_t input_dim = 1;
  std::size_t model_dim = 32;
  std::size_t seq_len = 16;
  std::size_t proj_width = 1;
  std::size_t depth = 1;
  HybridBlockConfig block;
};

template <typename T>
struct EncoderParams {
  EncoderConfig config;
  Tensor<T> embed_weight;  // [K_p x D_m x D]
  Tensor<T> embed_bias;    // [D]
  std::vector<HybridBlockParams<T>> blocks;
};

template <typename T>
EncoderParams<T> make_encoder(ParamStore<T>& store, const std::string& prefix,
                              const EncoderConfig& config, std::mt19937_64& rng);

// [L x D_m] -> [L x D] via the projection conv.
template <typename T>
Tensor<T> embed(const Tensor<T>& x, const EncoderParams<T>& params);

// Stack of hybrid blocks over H_m; identity when every block is disabled.
template <typename T>
Tensor<T> hierarchical_encode(const Tensor<T>& h, const EncoderParams<T>& params);

// resample -> embed -> hierarchical_encode
template <typename T>
Tensor<T> encode_sequence(const FeatureSequence& seq, const EncoderParams<T>& params);

}  // namespace hcmen
