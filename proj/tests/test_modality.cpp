#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "hcmen/error.hpp"
#include "hcmen/gradcheck.hpp"
#include "hcmen/hybrid_block.hpp"
#include "hcmen/modality.hpp"
#include "hcmen/ops.hpp"
#include "test_util.hpp"

namespace hcmen {
namespace {

using testing::random_tensor;
using testing::weighted_sum;

FeatureSequence random_seq(std::size_t steps, std::size_t dims, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(steps * dims);
  for (auto& e : v) e = u(rng);
  return FeatureSequence::from_values(steps, dims, std::move(v));
}

ModalityBatch random_batch(std::size_t n, std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModalityBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.ids.push_back("u" + std::to_string(i));
    b.labels.push_back(0.5f);
    b.features[0].push_back(random_seq(steps, 3, rng));
    b.features[1].push_back(random_seq(steps + 1, 2, rng));
    b.features[2].push_back(random_seq(steps + 2, 4, rng));
  }
  return b;
}

TEST(Corrupt, RateZeroIsIdentity) {
  auto b = random_batch(4, 5, 1);
  auto c = corrupt(b, 0.0, 9);
  for (auto m : kModalities)
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(c.at(m, i).values, b.at(m, i).values);
      EXPECT_EQ(c.at(m, i).mask, b.at(m, i).mask);
    }
}

TEST(Corrupt, RateOneZerosEverythingAndIsIdempotent) {
  auto b = random_batch(3, 4, 2);
  auto c = corrupt(b, 1.0, 3);
  for (auto m : kModalities)
    for (std::size_t i = 0; i < 3; ++i) {
      for (float v : c.at(m, i).values) EXPECT_EQ(v, 0.0f);
      for (auto bit : c.at(m, i).mask) EXPECT_EQ(bit, 0);
    }
  auto cc = corrupt(c, 1.0, 4);
  for (auto m : kModalities)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(cc.at(m, i).values, c.at(m, i).values);
}

TEST(Corrupt, HalfRateStatistic) {
  auto b = random_batch(50, 66, 5);
  auto c = corrupt(b, 0.5, 6);
  std::size_t total = 0, dropped = 0;
  for (auto m : kModalities)
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto& s = c.at(m, i);
      for (std::size_t t = 0; t < s.steps; ++t) {
        ++total;
        if (!s.mask[t]) {
          ++dropped;
          for (std::size_t j = 0; j < s.dims; ++j) EXPECT_EQ(s.values[t * s.dims + j], 0.0f);
        }
      }
    }
  ASSERT_GE(total, 10000u);
  const double frac = double(dropped) / double(total);
  EXPECT_LT(std::abs(frac - 0.5), 3.0 * std::sqrt(0.25 / double(total)));
}

TEST(Corrupt, DeterministicAndValidated) {
  auto b = random_batch(4, 6, 7);
  auto c1 = corrupt(b, 0.4, 11), c2 = corrupt(b, 0.4, 11);
  for (auto m : kModalities)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c1.at(m, i).mask, c2.at(m, i).mask);
  EXPECT_THROW(corrupt(b, 1.5, 0), ContractError);
  EXPECT_THROW(corrupt(b, -0.1, 0), ContractError);
}

TEST(Corrupt, WholeModalityMode) {
  auto b = random_batch(40, 5, 8);
  auto c = corrupt(b, 0.5, 12, {.mode = CorruptionMode::WholeModality});
  for (auto m : kModalities)
    for (std::size_t i = 0; i < c.size(); ++i) {
      std::set<std::uint8_t> bits(c.at(m, i).mask.begin(), c.at(m, i).mask.end());
      EXPECT_EQ(bits.size(), 1u);
    }
}

TEST(Corrupt, NoiseSubstitution) {
  auto b = random_batch(2, 30, 9);
  auto c = corrupt(b, 1.0, 13, {.substitute_noise = true});
  double sq = 0.0;
  std::size_t n = 0;
  for (float v : c.at(Modality::Vision, 0).values) sq += v * v, ++n;
  EXPECT_GT(sq / double(n), 0.3);
  for (auto bit : c.at(Modality::Vision, 0).mask) EXPECT_EQ(bit, 0);
}

TEST(Resample, IdentityConstantAndInterpolation) {
  std::mt19937_64 rng(1);
  auto x = random_tensor<float>({5, 3}, rng);
  EXPECT_TRUE(testing::bit_equal(resample_time(x, 5), x));
  auto c = resample_time(Tensor<float>::full({4, 2}, 1.25f), 9);
  for (float v : c.data()) EXPECT_FLOAT_EQ(v, 1.25f);
  auto r = resample_time(Tensor<double>({2, 1}, {0.0, 2.0}), 3);
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{0, 1, 2}));
  EXPECT_THROW(resample_time(Tensor<float>({0, 2}, {}), 3), EmptyInputError);
}

TEST(Resample, EndpointsAndIdempotence) {
  std::mt19937_64 rng(2);
  auto x = random_tensor<double>({7, 2}, rng);
  auto y = resample_time(x, 11);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(y.at(0, j), x.at(0, j));
    EXPECT_NEAR(y.at(10, j), x.at(6, j), 1e-15);
  }
  EXPECT_TRUE(testing::bit_equal(resample_time(y, 11), y));
}

EncoderConfig small_encoder(std::size_t input_dim) {
  EncoderConfig cfg;
  cfg.input_dim = input_dim;
  cfg.model_dim = 4;
  cfg.seq_len = 6;
  cfg.block.mamba = {.model_dim = 4, .inner_dim = 8, .state_dim = 2, .conv_width = 4};
  return cfg;
}

void zero_residual_branches(HybridBlockParams<double>& b) {
  if (b.conv_kernel.defined()) testing::fill(b.conv_kernel, 0.0);
  if (b.conv_bias.defined()) testing::fill(b.conv_bias, 0.0);
  if (b.config.use_global) {
    testing::fill(b.mamba.forward.out_weight, 0.0);
    testing::fill(b.mamba.backward.out_weight, 0.0);
  }
}

TEST(Embed, WidthOneIsTokenwiseLinear) {
  ParamStore<double> store;
  std::mt19937_64 rng(3);
  auto p = make_encoder(store, "enc", small_encoder(3), rng);
  auto x = random_tensor<double>({6, 3}, rng);
  auto h = embed(x, p);
  EXPECT_EQ(h.shape(), (Shape{6, 4}));
  auto ref = linear(x, reshape(p.embed_weight, {3, 4}), p.embed_bias);
  EXPECT_LT(testing::max_abs_diff(h, ref), 1e-12);
  EXPECT_THROW(embed(random_tensor<double>({6, 2}, rng), p), ConfigError);
}

TEST(Embed, ShapeContractForEveryModality) {
  ParamStore<float> store;
  std::mt19937_64 rng(4);
  const std::size_t dims[3] = {12, 8, 6}, steps[3] = {10, 16, 20};
  for (int m = 0; m < 3; ++m) {
    auto cfg = small_encoder(dims[m]);
    cfg.proj_width = 3;
    auto p = make_encoder(store, "enc" + std::to_string(m), cfg, rng);
    auto u = encode_sequence(random_seq(steps[m], dims[m], rng), p);
    EXPECT_EQ(u.shape(), (Shape{6, 4}));
  }
}

TEST(Embed, GradientCheck) {
  ParamStore<double> store;
  std::mt19937_64 rng(5);
  auto cfg = small_encoder(3);
  cfg.proj_width = 3;
  cfg.depth = 0;
  auto p = make_encoder(store, "enc", cfg, rng);
  testing::fill(p.embed_bias, 0.1);
  auto x = random_tensor<double>({6, 3}, rng);
  auto f = [&] { return weighted_sum(embed(x, p), 1); };
  EXPECT_LT(finite_diff_check(f, store, {}).max_rel_error, 1e-6);
}

TEST(HierarchicalEncode, ZeroBranchesAreIdentity) {
  ParamStore<double> store;
  std::mt19937_64 rng(6);
  auto p = make_encoder(store, "enc", small_encoder(3), rng);
  for (auto& b : p.blocks) zero_residual_branches(b);
  auto h = random_tensor<double>({6, 4}, rng);
  EXPECT_TRUE(testing::bit_equal(hierarchical_encode(h, p), h));
}

TEST(HierarchicalEncode, DisableCnnSkipsLocalStage) {
  ParamStore<double> store;
  std::mt19937_64 rng(7);
  auto cfg = small_encoder(3);
  cfg.block.use_local = false;
  auto p = make_encoder(store, "enc", cfg, rng);
  auto& b = p.blocks.at(0);
  EXPECT_FALSE(b.conv_kernel.defined());
  testing::fill(b.mamba.forward.out_weight, 0.2);
  testing::fill(b.mamba.backward.out_weight, -0.1);
  auto h = random_tensor<double>({6, 4}, rng);
  auto ref = add(h, bi_mamba(b.mamba, layer_norm(h, b.global_gamma, b.global_beta, b.config.ln_eps)));
  EXPECT_LT(testing::max_abs_diff(hierarchical_encode(h, p), ref), 1e-14);
}

TEST(HierarchicalEncode, MatchesResidualComposition) {
  ParamStore<double> store;
  std::mt19937_64 rng(8);
  auto p = make_encoder(store, "enc", small_encoder(3), rng);
  auto& b = p.blocks.at(0);
  testing::fill(b.mamba.forward.out_weight, 0.2);
  testing::fill(b.mamba.backward.out_weight, 0.1);
  auto h = random_tensor<double>({6, 4}, rng);
  auto local = add(h, depthwise_conv1d(layer_norm(h, b.local_gamma, b.local_beta, b.config.ln_eps),
                                       b.conv_kernel, b.conv_bias));
  auto ref = add(local, bi_mamba(b.mamba, layer_norm(local, b.global_gamma, b.global_beta, b.config.ln_eps)));
  EXPECT_LT(testing::max_abs_diff(hierarchical_encode(h, p), ref), 1e-14);
}

TEST(HierarchicalEncode, AblationsAreParameterSubsets) {
  auto names = [](bool local, bool global) {
    ParamStore<float> store;
    std::mt19937_64 rng(9);
    auto cfg = small_encoder(3);
    cfg.block.use_local = local;
    cfg.block.use_global = global;
    make_encoder(store, "enc", cfg, rng);
    std::set<std::string> out;
    for (const auto& [name, t] : store) out.insert(name);
    return out;
  };
  const auto full = names(true, true);
  for (const auto& sub : {names(false, true), names(true, false)}) {
    EXPECT_LT(sub.size(), full.size());
    for (const auto& n : sub) EXPECT_TRUE(full.count(n)) << n;
  }
}

}  // namespace
}  // namespace hcmen
