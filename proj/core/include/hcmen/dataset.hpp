#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hcmen/modality.hpp"

namespace hcmen {

enum class Split { Train, Valid, Test };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct Utterance {
  std::string id;
  float label = 0.0f;
  Split split = Split::Train;
  std::array<FeatureSequence, kNumModalities> features;
};

struct Dataset {
  std::vector<Utterance> items;

  std::vector<std::size_t> indices(Split s) const;
  std::size_t count(Split s) const { return indices(s).size(); }
  // Shared feature width per modality; throws if utterances disagree.
  std::array<std::size_t, kNumModalities> input_dims() const;
};

ModalityBatch make_batch(const Dataset& data, std::span<const std::size_t> indices);

// On-disk layout under `root`:
//   manifest.jsonl                 {"id": ..., "label": ..., "split": ...} per line
//   <text|vision|audio>/<id>.csv   one row per time step, comma separated
Dataset load_dataset(const std::filesystem::path& root);
void write_dataset(const Dataset& data, const std::filesystem::path& root);

struct SynthOptions {
  std::size_t count = 500;
  std::array<std::size_t, kNumModalities> lengths{10, 16, 20};
  std::array<std::size_t, kNumModalities> dims{12, 8, 6};
  // Per-modality noise standard deviation, multiplied by noise_scale.
  std::array<double, kNumModalities> noise{0.2, 0.8, 0.8};
  double noise_scale = 1.0;
  // Sequence lengths vary per utterance by up to this fraction of `lengths`.
  double length_jitter = 0.25;
  std::uint64_t seed = 0;
};

// Latent s ~ U(-3, 3) is the label. Every stream mixes a fixed embedding of s,
// an s-scaled sinusoid over time, a per-utterance nuisance direction and
// white noise; nuisance and noise are scaled by the modality noise level.
// Split is 70/10/20 in id order.
Dataset generate_synthetic(const SynthOptions& options);

}  // namespace hcmen
