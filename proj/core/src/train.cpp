#include "hcmen/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

#include "hcmen/checkpoint.hpp"
#include "hcmen/error.hpp"
#include "hcmen/init.hpp"

namespace hcmen {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348u;
constexpr std::uint64_t kCorruptStream = 0x434fu;
constexpr std::uint64_t kMixStream = 0x4d49u;
constexpr std::uint64_t kValidStream = 0x5641u;

void check_finite(const Tensor<float>& loss) {
  if (std::isfinite(loss.item())) return;
  const Node<float>* bad = first_non_finite(loss);
  throw NumericError(std::string("non-finite loss; first non-finite tensor is the output of '") +
                     (bad ? bad->op : "?") + "' with shape " +
                     (bad ? shape_to_string(bad->shape) : std::string("?")));
}

}  // namespace

StepLosses train_step(HcmenModel<float>& model, Adam<float>& optimizer, const ModalityBatch& batch,
                      std::uint64_t mix_seed) {
  model.params().zero_grad();
  auto out = model.forward(batch, {.training = true, .mix_seed = mix_seed});
  check_finite(out.loss_total);
  StepLosses losses;
  losses.loss_p = out.loss_p.item();
  losses.loss_c = out.loss_c.defined() ? out.loss_c.item() : 0.0;
  losses.loss_total = out.loss_total.item();
  backward(out.loss_total);
  optimizer.step(model.params());
  return losses;
}

ModelConfig resolve_config(const ModelConfig& config, const Dataset& data) {
  ModelConfig resolved = config;
  const auto dims = data.input_dims();
  for (auto m : kModalities) {
    auto& slot = resolved.input_dims[index_of(m)];
    if (slot == 0) {
      slot = dims[index_of(m)];
    } else if (slot != dims[index_of(m)]) {
      throw ConfigError("invalid config field 'input_dims': " + std::string(modality_name(m)) +
                        " width " + std::to_string(slot) + " but dataset has " +
                        std::to_string(dims[index_of(m)]));
    }
  }
  resolved.validate();
  return resolved;
}

std::vector<double> predict(const HcmenModel<float>& model, const ModalityBatch& batch) {
  NoGradGuard no_grad;
  std::vector<double> preds;
  preds.reserve(batch.size());
  const std::size_t chunk = model.config().batch_size;
  for (std::size_t start = 0; start < batch.size(); start += chunk) {
    const std::size_t stop = std::min(batch.size(), start + chunk);
    ModalityBatch part;
    part.ids.assign(batch.ids.begin() + start, batch.ids.begin() + stop);
    part.labels.assign(batch.labels.begin() + start, batch.labels.begin() + stop);
    for (auto m : kModalities) {
      const auto& src = batch.features[index_of(m)];
      part.features[index_of(m)].assign(src.begin() + start, src.begin() + stop);
    }
    auto out = model.forward(part, {.training = false});
    for (float v : out.preds.data()) preds.push_back(v);
  }
  return preds;
}

MetricsReport evaluate(const HcmenModel<float>& model, const Dataset& data, Split split,
                       double missing_rate, std::uint64_t seed) {
  const auto idx = data.indices(split);
  if (idx.empty()) throw EmptyInputError("evaluate: split '" + std::string(split_name(split)) + "' is empty");
  const auto batch = corrupt(make_batch(data, idx), missing_rate, seed, model.config().corruption());
  const auto preds = predict(model, batch);
  std::vector<double> labels(batch.labels.begin(), batch.labels.end());
  return compute_metrics(preds, labels);
}

HcmenModel<float> best_model(const TrainResult& result) {
  HcmenModel<float> model(result.config);
  for (auto& [name, t] : model.params()) {
    const auto it = result.best_weights.find(name);
    if (it == result.best_weights.end() || it->second.size() != t.numel()) {
      throw ContractError("best_model: no stored weights for '" + name + "'");
    }
    std::copy(it->second.begin(), it->second.end(), t.mutable_data().begin());
  }
  return model;
}

HcmenModel<float> load_model(const std::filesystem::path& checkpoint) {
  auto ck = load_checkpoint(checkpoint);
  HcmenModel<float> model(ck.config);
  copy_values(model.params(), ck.params);
  return model;
}

TrainResult train(const ModelConfig& config, const Dataset& data, const TrainOptions& options) {
  const ModelConfig cfg = resolve_config(config, data);
  auto train_idx = data.indices(Split::Train);
  if (train_idx.empty()) throw EmptyInputError("train: dataset has no training utterances");
  auto valid_idx = data.indices(Split::Valid);
  const Split select_split = valid_idx.empty() ? Split::Train : Split::Valid;

  HcmenModel<float> model(cfg);
  Adam<float> optimizer({.learning_rate = cfg.learning_rate});

  std::ofstream metrics;
  if (!options.metrics_path.empty()) {
    metrics.open(options.metrics_path, std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics log " + options.metrics_path.string());
    metrics << "epoch,loss_p,loss_c,loss_total," << metrics_csv_header("val_") << '\n';
  }

  TrainResult result;
  result.config = cfg;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, kShuffleStream, epoch));
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(train_idx.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(train_idx.data() + start, stop - start);
      const auto batch = corrupt(make_batch(data, rows), cfg.missing_rate,
                                 mix_seed(cfg.seed, kCorruptStream, epoch * 1000003u + batches),
                                 cfg.corruption());
      const auto step = train_step(model, optimizer, batch,
                                   mix_seed(cfg.seed, kMixStream, epoch * 1000003u + batches));
      log.loss_p += step.loss_p;
      log.loss_c += step.loss_c;
      log.loss_total += step.loss_total;
      ++batches;
    }
    log.loss_p /= static_cast<double>(batches);
    log.loss_c /= static_cast<double>(batches);
    log.loss_total /= static_cast<double>(batches);
    log.val = evaluate(model, data, select_split, cfg.missing_rate, mix_seed(cfg.seed, kValidStream));

    if (epoch == 0 || log.val.mae < result.best_val_mae) {
      result.best_val_mae = log.val.mae;
      result.best_epoch = epoch;
      for (const auto& [name, t] : model.params()) result.best_weights[name].assign(t.data().begin(), t.data().end());
      if (!options.checkpoint_path.empty()) save_checkpoint(model.params(), cfg, options.checkpoint_path);
    }
    if (metrics.is_open()) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,", epoch, log.loss_p, log.loss_c, log.loss_total);
      metrics << buf << metrics_csv_row(log.val) << '\n' << std::flush;
    }
    if (options.log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %3zu  loss_p %.4f  loss_c %.4f  loss_total %.4f  val_mae %.4f\n",
                    epoch, log.loss_p, log.loss_c, log.loss_total, log.val.mae);
      *options.log << buf << std::flush;
    }
    result.epochs.push_back(log);
  }
  return result;
}

}  // namespace hcmen
