#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hcmen/adam.hpp"
#include "hcmen/checkpoint.hpp"
#include "hcmen/config.hpp"
#include "hcmen/dataset.hpp"
#include "hcmen/error.hpp"
#include "hcmen/gradcheck_suite.hpp"
#include "hcmen/init.hpp"
#include "hcmen/metrics.hpp"
#include "hcmen/ops.hpp"
#include "hcmen/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace hcmen {
namespace {

namespace fs = std::filesystem;

ModelConfig small_config() {
  ModelConfig c = tiny_gradcheck_config();
  c.input_dims = {0, 0, 0};
  c.batch_size = 4;
  c.epochs = 1;
  return c;
}

Dataset small_data(std::size_t n, std::uint64_t seed = 0) {
  SynthOptions o;
  o.count = n;
  o.seed = seed;
  o.lengths = {5, 6, 7};
  o.dims = {3, 2, 2};
  return generate_synthetic(o);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore<double> store;
  auto p = store.add("p", Tensor<double>({3}, {1.0, -2.0, 0.5}, true));
  backward(scale(sum(p), 0.0));
  Adam<double> opt;
  opt.step(store);
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, FirstStepIsLrTimesSign) {
  ParamStore<double> store;
  auto p = store.add("p", Tensor<double>({3}, {1.0, -2.0, 0.5}, true));
  auto g = Tensor<double>({3}, {3.0, -0.01, 50.0});
  backward(sum(mul(p, g)));
  Adam<double> opt({.learning_rate = 0.01});
  opt.step(store);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-8);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-6);
  EXPECT_NEAR(p[2], 0.5 - 0.01, 1e-8);
}

TEST(Adam, QuadraticBowlConverges) {
  ParamStore<double> store;
  auto p = store.add("p", Tensor<double>({4}, {1.5, -2.0, 0.7, 3.0}, true));
  Adam<double> opt({.learning_rate = 0.05});
  for (int i = 0; i < 500; ++i) {
    store.zero_grad();
    backward(sum(mul(p, p)));
    opt.step(store);
  }
  double norm = 0.0;
  for (double v : p.data()) norm += v * v;
  EXPECT_LT(std::sqrt(norm), 1e-3);
}

TEST(Adam, MissingGradientIsContractError) {
  ParamStore<double> store;
  store.add("p", Tensor<double>({1}, {1.0}, true));
  Adam<double> opt;
  EXPECT_THROW(opt.step(store), ContractError);
}

TEST(Metrics, PerfectAndShifted) {
  std::vector<double> y{-2.5, -1.0, 0.3, 1.7, 2.9, -0.4};
  auto r = compute_metrics(y, y);
  EXPECT_EQ(r.acc7, 1.0);
  EXPECT_EQ(r.acc5, 1.0);
  EXPECT_EQ(r.acc2_has0, 1.0);
  EXPECT_EQ(r.acc2_non0, 1.0);
  EXPECT_DOUBLE_EQ(r.f1_has0, 1.0);
  EXPECT_DOUBLE_EQ(r.f1_non0, 1.0);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_NEAR(r.corr, 1.0, 1e-12);
  std::vector<double> p = y;
  for (auto& v : p) v += 0.5;
  auto s = compute_metrics(p, y);
  EXPECT_NEAR(s.mae, 0.5, 1e-12);
  EXPECT_NEAR(s.corr, 1.0, 1e-12);
}

TEST(Metrics, DualBinaryConventions) {
  std::vector<double> y{-1, 0, 1}, p{-1, -0.2, 1};
  auto r = compute_metrics(p, y);
  EXPECT_DOUBLE_EQ(r.acc2_has0, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.acc2_non0, 1.0);
}

TEST(Metrics, ConstantLabelsFlagCorrelation) {
  std::vector<double> y{1, 1, 1}, p{0.2, 0.5, 0.9};
  auto r = compute_metrics(p, y);
  EXPECT_TRUE(r.corr_undefined);
  EXPECT_EQ(r.corr, 0.0);
  EXPECT_THROW(compute_metrics(std::vector<double>{}, std::vector<double>{}), DimensionError);
}

TEST(Metrics, MatchesNaiveOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.5, 3.5);
  std::uniform_int_distribution<int> coin(0, 9);
  std::vector<double> p(1000), y(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    p[i] = u(rng);
    y[i] = coin(rng) == 0 ? 0.0 : std::round(u(rng) * 4) / 4;  // ties and zero labels
  }
  auto r = compute_metrics(p, y);
  auto o = oracle::naive_metrics(p, y);
  EXPECT_EQ(r.acc7, o.acc7);
  EXPECT_EQ(r.acc5, o.acc5);
  EXPECT_EQ(r.acc2_has0, o.acc2_has0);
  EXPECT_EQ(r.acc2_non0, o.acc2_non0);
  EXPECT_NEAR(r.f1_has0, o.f1_has0, 1e-9);
  EXPECT_NEAR(r.f1_non0, o.f1_non0, 1e-9);
  EXPECT_NEAR(r.mae, o.mae, 1e-9);
  EXPECT_NEAR(r.corr, o.corr, 1e-9);
}

TEST(Synthetic, NoiseFreeTextMeanIsLabel) {
  SynthOptions o;
  o.count = 20;
  o.dims = {1, 2, 2};
  o.noise_scale = 0.0;
  auto d = generate_synthetic(o);
  for (const auto& u : d.items) {
    const auto& s = u.features[0];
    // the sinusoid spans exactly one period, so it averages out
    double mean = 0.0;
    for (float v : s.values) mean += v;
    mean /= double(s.values.size());
    EXPECT_LE(u.label, 3.0f);
    EXPECT_GE(u.label, -3.0f);
    EXPECT_NEAR(mean, u.label, 1e-5);
  }
}

TEST(Synthetic, SplitAndDeterminism) {
  auto a = small_data(100, 4), b = small_data(100, 4);
  EXPECT_EQ(a.count(Split::Train), 70u);
  EXPECT_EQ(a.count(Split::Valid), 10u);
  EXPECT_EQ(a.count(Split::Test), 20u);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(a.items[i].label, b.items[i].label);
    EXPECT_EQ(a.items[i].features[1].values, b.items[i].features[1].values);
  }
  EXPECT_THROW(small_data(0), ContractError);
}

TEST(Synthetic, RidgeOnTextIsLearnable) {
  SynthOptions o;
  o.count = 500;
  auto d = generate_synthetic(o);
  EXPECT_LT(oracle::ridge_text_mae(d), 0.3);
}

TEST(Dataset, DiskRoundTrip) {
  testing::TempDir dir("ds");
  auto d = small_data(12, 5);
  write_dataset(d, dir.path());
  EXPECT_TRUE(fs::exists(dir.path() / "manifest.jsonl"));
  EXPECT_TRUE(fs::exists(dir.path() / "audio" / (d.items[0].id + ".csv")));
  auto back = load_dataset(dir.path());
  ASSERT_EQ(back.items.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(back.items[i].id, d.items[i].id);
    EXPECT_EQ(back.items[i].split, d.items[i].split);
    EXPECT_EQ(back.items[i].label, d.items[i].label);
    for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(back.items[i].features[m].values, d.items[i].features[m].values);
  }
}

TEST(Dataset, MalformedFilesAreIoErrors) {
  testing::TempDir dir("bad");
  auto d = small_data(3, 6);
  write_dataset(d, dir.path());
  std::ofstream(dir.path() / "text" / (d.items[1].id + ".csv")) << "1,2,3\n4,5\n";
  EXPECT_THROW(load_dataset(dir.path()), IoError);
  EXPECT_THROW(load_dataset(dir.path() / "missing"), IoError);
}

TEST(Config, JsonRoundTripAndErrors) {
  ModelConfig c;
  c.model_dim = 24;
  c.disable_mamba = true;
  c.corruption_mode = CorruptionMode::WholeModality;
  c.input_dims = {4, 5, 6};
  EXPECT_TRUE(config_from_json(config_to_json(c)) == c);
  EXPECT_EQ(config_from_json("{}").model_dim, 32u);
  try {
    config_from_json(R"({"model_dimm": 3})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model_dimm"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(R"({"missing_rate": 1.5})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"temperature": 0})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"seq_len": "16"})"), ConfigError);
  EXPECT_THROW(config_from_json("[1]"), ConfigError);
}

TEST(Checkpoint, BitExactRoundTripAndSize) {
  testing::TempDir dir("ck");
  auto cfg = small_config();
  cfg.input_dims = {3, 2, 2};
  HcmenModel<float> model(cfg);
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(model.params(), cfg, path);
  auto ck = load_checkpoint(path);
  EXPECT_TRUE(ck.config == cfg);
  ASSERT_EQ(ck.params.size(), model.params().size());
  for (const auto& [name, t] : model.params()) EXPECT_TRUE(testing::bit_equal(ck.params.at(name), t)) << name;

  std::ifstream in(path, std::ios::binary);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(blob.substr(0, 8), "HCMENCK1");
  std::uint64_t header = 0;
  for (int i = 0; i < 8; ++i) header |= std::uint64_t(static_cast<unsigned char>(blob[8 + i])) << (8 * i);
  EXPECT_EQ(fs::file_size(path), 16 + header + 4 * model.parameter_count());
}

TEST(Checkpoint, CorruptFilesFailToLoad) {
  testing::TempDir dir("ckbad");
  auto cfg = small_config();
  cfg.input_dims = {3, 2, 2};
  HcmenModel<float> model(cfg);
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(model.params(), cfg, path);
  std::ifstream in(path, std::ios::binary);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  auto write = [&](const std::string& bytes) { std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes; };
  write(blob.substr(0, blob.size() - 5));
  EXPECT_THROW(load_checkpoint(path), LoadError);
  std::string bad = blob;
  bad[3] = 'X';
  write(bad);
  EXPECT_THROW(load_checkpoint(path), LoadError);
  write(blob);
  EXPECT_NO_THROW(load_checkpoint(path));
}

TEST(Checkpoint, MismatchedDimensionFails) {
  testing::TempDir dir("ckdim");
  auto cfg = small_config();
  cfg.input_dims = {3, 2, 2};
  HcmenModel<float> model(cfg);
  cfg.model_dim = 6;
  cfg.inner_dim = 12;
  HcmenModel<float> other(cfg);
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(other.params(), cfg, path);
  auto ck = load_checkpoint(path);
  try {
    copy_values(model.params(), ck.params);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos);
  }
}

TEST(Train, OneEpochSmokeWritesLoadableCheckpoint) {
  testing::TempDir dir("train");
  auto data = small_data(11, 7);
  TrainOptions opts;
  opts.checkpoint_path = dir.path() / "m.ckpt";
  opts.metrics_path = dir.path() / "m.csv";
  auto r = train(small_config(), data, opts);
  ASSERT_EQ(r.epochs.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.epochs[0].loss_total));
  auto model = load_model(opts.checkpoint_path);
  EXPECT_EQ(model.config().input_dims, (std::array<std::size_t, 3>{3, 2, 2}));
  std::ifstream csv(opts.metrics_path);
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header.rfind("epoch,loss_p,loss_c,loss_total,val_mae,val_acc7", 0), 0u);
  EXPECT_EQ(row.rfind("0,", 0), 0u);
}

TEST(Train, DisableCmeaLogsZeroContrastiveLoss) {
  auto cfg = small_config();
  cfg.disable_cmea = true;
  cfg.epochs = 2;
  auto r = train(cfg, small_data(10, 8));
  for (const auto& e : r.epochs) {
    EXPECT_EQ(e.loss_c, 0.0);
    EXPECT_EQ(e.loss_p, e.loss_total);
  }
}

TEST(Train, SameSeedSameFirstEpochLoss) {
  auto data = small_data(12, 9);
  auto a = train(small_config(), data), b = train(small_config(), data);
  EXPECT_EQ(a.epochs[0].loss_total, b.epochs[0].loss_total);
  EXPECT_EQ(a.epochs[0].val.mae, b.epochs[0].val.mae);
}

TEST(Train, BestModelMatchesCheckpoint) {
  testing::TempDir dir("best");
  auto cfg = small_config();
  cfg.epochs = 3;
  TrainOptions opts;
  opts.checkpoint_path = dir.path() / "m.ckpt";
  auto r = train(cfg, small_data(10, 10), opts);
  auto best = best_model(r);
  auto loaded = load_model(opts.checkpoint_path);
  for (const auto& [name, t] : best.params()) EXPECT_TRUE(testing::bit_equal(loaded.params().at(name), t));
}

TEST(Train, FrozenBatchLossDecreases) {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto data = small_data(16, 100 + seed);
    auto cfg = resolve_config(small_config(), data);
    cfg.seed = seed;
    HcmenModel<float> model(cfg);
    Adam<float> opt({.learning_rate = 1e-3});
    const std::vector<std::size_t> rows{0, 1, 2, 3};
    const auto batch = make_batch(data, rows);
    std::vector<double> losses;
    for (int step = 0; step <= 20; ++step) losses.push_back(train_step(model, opt, batch, 17).loss_total);
    bool strictly = true;
    for (std::size_t i = 1; i < losses.size(); ++i) strictly = strictly && losses[i] < losses[i - 1];
    good += strictly;
  }
  EXPECT_GE(good, 9);
}

TEST(Evaluate, DeterministicAndInformationFreeAtFullMask) {
  auto data = small_data(30, 11);
  auto cfg = resolve_config(small_config(), data);
  HcmenModel<float> model(cfg);
  auto a = evaluate(model, data, Split::Test, 0.0, 3);
  auto b = evaluate(model, data, Split::Test, 0.0, 3);
  EXPECT_EQ(a.mae, b.mae);
  EXPECT_EQ(a.corr, b.corr);

  const auto idx = data.indices(Split::Test);
  auto blank = corrupt(make_batch(data, idx), 1.0, 4);
  auto preds = predict(model, blank);
  for (double p : preds) EXPECT_NEAR(p, preds.front(), 1e-6);

  auto r = evaluate(model, data, Split::Test, 0.5, 5);
  for (double v : {r.acc7, r.acc5, r.acc2_has0, r.acc2_non0, r.f1_has0, r.f1_non0}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GE(r.mae, 0.0);
  EXPECT_GE(r.corr, -1.0);
  EXPECT_LE(r.corr, 1.0);
}

TEST(Evaluate, MaskingDegradesTrainedModels) {
  auto data = small_data(200, 13);
  std::vector<double> clean, heavy, blank;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = small_config();
    cfg.seed = seed;
    cfg.epochs = 8;
    cfg.batch_size = 8;
    const auto model = best_model(train(cfg, data));
    clean.push_back(evaluate(model, data, Split::Test, 0.0, 1).mae);
    heavy.push_back(evaluate(model, data, Split::Test, 0.7, 1).mae);
    blank.push_back(evaluate(model, data, Split::Test, 1.0, 1).mae);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  EXPECT_GE(median(heavy), median(clean));
  EXPECT_LE(median(clean), median(blank));
}

TEST(Train, NonFiniteLossNamesTensor) {
  auto data = small_data(8, 12);
  auto cfg = resolve_config(small_config(), data);
  HcmenModel<float> model(cfg);
  testing::fill(model.params().at("head.bias"), std::numeric_limits<float>::infinity());
  Adam<float> opt;
  const std::vector<std::size_t> rows{0, 1};
  try {
    train_step(model, opt, make_batch(data, rows), 0);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("first non-finite tensor"), std::string::npos);
  }
}

}  // namespace
}  // namespace hcmen
