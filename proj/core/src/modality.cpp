#include "hcmen/modality.hpp"

#include <cmath>

#include "hcmen/error.hpp"
#include "hcmen/init.hpp"
#include "hcmen/ops.hpp"

namespace hcmen {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::Text:
      return "text";
    case Modality::Vision:
      return "vision";
    case Modality::Audio:
      return "audio";
  }
  return "unknown";
}

FeatureSequence FeatureSequence::from_values(std::size_t steps, std::size_t dims,
                                             std::vector<float> values) {
  if (values.size() != steps * dims) {
    throw DimensionError("feature sequence: " + std::to_string(values.size()) +
                         " values for " + std::to_string(steps) + "x" + std::to_string(dims));
  }
  FeatureSequence seq;
  seq.steps = steps;
  seq.dims = dims;
  seq.values = std::move(values);
  seq.mask.assign(steps, 1);
  return seq;
}

void ModalityBatch::validate() const {
  const std::size_t n = labels.size();
  if (ids.size() != n) throw DimensionError("batch: id count does not match label count");
  for (auto m : kModalities) {
    const auto& seqs = features[index_of(m)];
    if (seqs.size() != n) {
      throw DimensionError("batch: modality " + std::string(modality_name(m)) + " has " +
                           std::to_string(seqs.size()) + " sequences for " +
                           std::to_string(n) + " labels");
    }
    for (const auto& s : seqs) {
      if (s.values.size() != s.steps * s.dims || s.mask.size() != s.steps) {
        throw DimensionError("batch: malformed " + std::string(modality_name(m)) + " sequence");
      }
    }
  }
  for (float y : labels) {
    if (!(y >= -3.0f && y <= 3.0f)) {
      throw ContractError("batch: label " + std::to_string(y) + " outside [-3, 3]");
    }
  }
}

ModalityBatch corrupt(const ModalityBatch& batch, double rate, std::uint64_t seed,
                      const CorruptionOptions& options) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ContractError("corrupt: missing rate " + std::to_string(rate) + " outside [0, 1]");
  }
  ModalityBatch out = batch;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<float> noise(0.0f, 1.0f);

  auto drop_row = [&](FeatureSequence& seq, std::size_t row) {
    float* v = seq.values.data() + row * seq.dims;
    for (std::size_t j = 0; j < seq.dims; ++j) v[j] = options.substitute_noise ? noise(rng) : 0.0f;
    seq.mask[row] = 0;
  };

  for (auto m : kModalities) {
    for (auto& seq : out.features[index_of(m)]) {
      if (options.mode == CorruptionMode::WholeModality) {
        if (coin(rng) < rate)
          for (std::size_t t = 0; t < seq.steps; ++t) drop_row(seq, t);
      } else {
        for (std::size_t t = 0; t < seq.steps; ++t)
          if (coin(rng) < rate) drop_row(seq, t);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> to_tensor(const FeatureSequence& seq) {
  std::vector<T> data(seq.values.begin(), seq.values.end());
  return Tensor<T>({seq.steps, seq.dims}, std::move(data));
}

template <typename T>
Tensor<T> resample_time(const Tensor<T>& x, std::size_t target_len) {
  if (x.rank() != 2) throw DimensionError("resample_time: expected [T x D] input");
  const std::size_t steps = x.dim(0), dims = x.dim(1);
  if (steps == 0) throw EmptyInputError("resample_time: empty sequence");
  if (target_len == 0) throw ConfigError("resample_time: target length must be positive");
  if (steps == target_len) return x.detach();

  std::vector<T> out(target_len * dims);
  const auto src = x.data();
  for (std::size_t i = 0; i < target_len; ++i) {
    const double pos = target_len == 1
                           ? static_cast<double>(steps - 1) / 2.0
                           : static_cast<double>(i * (steps - 1)) / static_cast<double>(target_len - 1);
    const std::size_t lo = std::min(static_cast<std::size_t>(std::floor(pos)), steps - 1);
    const std::size_t hi = std::min(lo + 1, steps - 1);
    const T w = static_cast<T>(pos - static_cast<double>(lo));
    for (std::size_t j = 0; j < dims; ++j) {
      const T a = src[lo * dims + j];
      const T b = src[hi * dims + j];
      out[i * dims + j] = a + w * (b - a);
    }
  }
  return Tensor<T>({target_len, dims}, std::move(out));
}

template <typename T>
EncoderParams<T> make_encoder(ParamStore<T>& store, const std::string& prefix,
                              const EncoderConfig& config, std::mt19937_64& rng) {
  if (config.input_dim == 0 || config.model_dim == 0 || config.seq_len == 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (config.proj_width % 2 == 0) throw ConfigError("projection conv width must be odd");
  EncoderParams<T> p;
  p.config = config;
  p.embed_weight = store.add(
      prefix + ".embed.weight",
      fan_in_tensor<T>({config.proj_width, config.input_dim, config.model_dim},
                       config.proj_width * config.input_dim, rng));
  // Nonzero so masked (all-zero) inputs never embed to an exactly zero row.
  p.embed_bias = store.add(prefix + ".embed.bias",
                           fan_in_tensor<T>({config.model_dim}, config.proj_width * config.input_dim, rng));
  auto block = config.block;
  block.dim = config.model_dim;
  for (std::size_t i = 0; i < config.depth; ++i) {
    p.blocks.push_back(
        make_hybrid_block<T>(store, prefix + ".block" + std::to_string(i), block, rng));
  }
  return p;
}

template <typename T>
Tensor<T> embed(const Tensor<T>& x, const EncoderParams<T>& params) {
  if (x.rank() != 2 || x.dim(1) != params.config.input_dim) {
    throw ConfigError("embed: input " + shape_to_string(x.shape()) + " but encoder expects " +
                      std::to_string(params.config.input_dim) + " channels");
  }
  return conv1d(x, params.embed_weight, params.embed_bias);
}

template <typename T>
Tensor<T> hierarchical_encode(const Tensor<T>& h, const EncoderParams<T>& params) {
  Tensor<T> out = h;
  for (const auto& block : params.blocks) out = hybrid_block(block, out);
  return out;
}

template <typename T>
Tensor<T> encode_sequence(const FeatureSequence& seq, const EncoderParams<T>& params) {
  auto aligned = resample_time(to_tensor<T>(seq), params.config.seq_len);
  return hierarchical_encode(embed(aligned, params), params);
}

#define HCMEN_INSTANTIATE(T)                                                                   \
  template Tensor<T> to_tensor<T>(const FeatureSequence&);                                     \
  template Tensor<T> resample_time<T>(const Tensor<T>&, std::size_t);                          \
  template EncoderParams<T> make_encoder<T>(ParamStore<T>&, const std::string&,                \
                                            const EncoderConfig&, std::mt19937_64&);           \
  template Tensor<T> embed<T>(const Tensor<T>&, const EncoderParams<T>&);                      \
  template Tensor<T> hierarchical_encode<T>(const Tensor<T>&, const EncoderParams<T>&);        \
  template Tensor<T> encode_sequence<T>(const FeatureSequence&, const EncoderParams<T>&);

HCMEN_INSTANTIATE(float)
HCMEN_INSTANTIATE(double)
HCMEN_INSTANTIATE(long double)
#undef HCMEN_INSTANTIATE

}  // namespace hcmen
