#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <optional>
#include <vector>

#include "hcmen/adam.hpp"
#include "hcmen/config.hpp"
#include "hcmen/dataset.hpp"
#include "hcmen/metrics.hpp"
#include "hcmen/model.hpp"

namespace hcmen {

struct EpochLog {
  std::size_t epoch = 0;
  double loss_p = 0.0;
  double loss_c = 0.0;
  double loss_total = 0.0;
  MetricsReport val;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  // Resolved config and a copy of the weights at best_epoch.
  ModelConfig config;
  std::map<std::string, std::vector<float>> best_weights;
};

struct TrainOptions {
  // Best-validation-MAE checkpoint; skipped when empty.
  std::filesystem::path checkpoint_path;
  // Per-epoch CSV log; skipped when empty.
  std::filesystem::path metrics_path;
  // Progress lines, one per epoch.
  std::ostream* log = nullptr;
};

struct StepLosses {
  double loss_p = 0.0;
  double loss_c = 0.0;
  double loss_total = 0.0;
};

// Forward, backward and one Adam update on an already corrupted batch.
// Throws NumericError naming the first non-finite tensor if the loss blows up.
StepLosses train_step(HcmenModel<float>& model, Adam<float>& optimizer, const ModalityBatch& batch,
                      std::uint64_t mix_seed);

// Config with input_dims taken from the dataset (checked if already set).
ModelConfig resolve_config(const ModelConfig& config, const Dataset& data);

// Epoch loop: shuffle, corrupt each batch at config.missing_rate with a fresh
// seed, step, then evaluate on the validation split (corrupted at the same
// rate with a fixed seed). Keeps the checkpoint with the lowest validation MAE.
TrainResult train(const ModelConfig& config, const Dataset& data, const TrainOptions& options = {});

std::vector<double> predict(const HcmenModel<float>& model, const ModalityBatch& batch);

// Corrupts the split at `missing_rate` with `seed` and scores predictions.
MetricsReport evaluate(const HcmenModel<float>& model, const Dataset& data, Split split,
                       double missing_rate, std::uint64_t seed);

// Model with the weights kept at the best validation epoch.
HcmenModel<float> best_model(const TrainResult& result);

// Rebuilds the model described by a checkpoint and restores its weights.
HcmenModel<float> load_model(const std::filesystem::path& checkpoint);

}  // namespace hcmen
