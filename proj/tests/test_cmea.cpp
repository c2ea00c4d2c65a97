#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hcmen/cmea.hpp"
#include "hcmen/error.hpp"
#include "hcmen/gradcheck.hpp"
#include "hcmen/ops.hpp"
#include "test_util.hpp"

namespace hcmen {
namespace {

using testing::random_tensor;
using testing::weighted_sum;

TEST(MixTokens, Boundaries) {
  std::mt19937_64 rng(1);
  auto um = random_tensor<float>({50, 4}, rng);
  auto ut = random_tensor<float>({50, 4}, rng);
  EXPECT_TRUE(testing::bit_equal(mix_tokens(um, ut, 1.0, rng).mixed, um));
  EXPECT_TRUE(testing::bit_equal(mix_tokens(um, ut, 0.0, rng).mixed, ut));
  EXPECT_THROW(mix_tokens(um, random_tensor<float>({49, 4}, rng), 0.5, rng), DimensionError);
}

class MixStatistic : public ::testing::TestWithParam<double> {};

TEST_P(MixStatistic, ReplacementFractionWithinThreeSigma) {
  const double p_star = GetParam();
  std::mt19937_64 rng(42);
  auto um = random_tensor<float>({10000, 2}, rng);
  auto ut = random_tensor<float>({10000, 2}, rng);
  auto r = mix_tokens(um, ut, p_star, rng);
  std::size_t replaced = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    const bool text = r.mixed.at(i, 0) == ut.at(i, 0) && r.mixed.at(i, 1) == ut.at(i, 1);
    const bool own = r.mixed.at(i, 0) == um.at(i, 0) && r.mixed.at(i, 1) == um.at(i, 1);
    EXPECT_TRUE(text || own);
    EXPECT_EQ(r.replaced[i], text ? 1 : 0);
    replaced += r.replaced[i];
  }
  const double q = 1.0 - p_star;
  const double sigma = std::sqrt(q * (1.0 - q) / 10000.0);
  EXPECT_LE(std::abs(double(replaced) / 10000.0 - q), 3.0 * sigma);
}

INSTANTIATE_TEST_SUITE_P(Thresholds, MixStatistic, ::testing::Values(0.0, 0.3, 0.7, 1.0));

TEST(ProxyForward, ZeroWeightsGiveZero) {
  ParamStore<float> store;
  std::mt19937_64 rng(2);
  auto mlp = make_proxy_mlp(store, "p", 4, 8, rng);
  for (auto& [name, t] : store) testing::fill(t, 0.0f);
  auto e = proxy_forward(random_tensor<float>({5, 4}, rng), mlp);
  EXPECT_EQ(e.shape(), (Shape{5, 4}));
  for (float v : e.data()) EXPECT_EQ(v, 0.0f);
}

TEST(ProxyForward, GradientCheck) {
  ParamStore<double> store;
  std::mt19937_64 rng(3);
  auto mlp = make_proxy_mlp(store, "p", 4, 8, rng);
  testing::fill(mlp.fc1_bias, 0.1);
  testing::fill(mlp.fc2_bias, -0.2);
  auto x = store.add("x", testing::param({3, 4}, rng));
  auto f = [&] { return weighted_sum(proxy_forward(x, mlp), 4); };
  GradCheckOptions opts;
  opts.max_coords_per_tensor = 100;
  EXPECT_LT(finite_diff_check(f, store, opts).max_rel_error, 1e-6);
}

TEST(TokenCosine, ClosedForms) {
  std::mt19937_64 rng(4);
  auto u = random_tensor<double>({6, 3}, rng);
  EXPECT_NEAR(token_avg_cosine(u, u).item(), 1.0, 1e-10);
  auto a = Tensor<double>({2, 2}, {1, 0, 0, 1});
  auto b = Tensor<double>({2, 2}, {0, 1, 1, 0});
  EXPECT_NEAR(token_avg_cosine(a, b).item(), 0.0, 1e-15);
  auto c = Tensor<double>({2, 2}, {2, 0, 0, 3});
  auto d = Tensor<double>({2, 2}, {5, 0, 1, 0});
  EXPECT_NEAR(token_avg_cosine(c, d).item(), 0.5, 1e-10);
  auto z = Tensor<double>({2, 2}, {0, 0, 1, 0});
  EXPECT_NEAR(token_avg_cosine(z, d).item(), 0.5, 1e-10);
}

std::vector<Tensor<double>> random_batch(std::size_t b, std::mt19937_64& rng) {
  std::vector<Tensor<double>> out;
  for (std::size_t i = 0; i < b; ++i) out.push_back(random_tensor<double>({3, 4}, rng));
  return out;
}

TEST(InfoNce, SingleSampleIsZero) {
  std::mt19937_64 rng(5);
  auto v = random_batch(1, rng), a = random_batch(1, rng), t = random_batch(1, rng);
  EXPECT_NEAR(infonce_loss(v, a, t, 0.1).item(), 0.0, 1e-12);
}

TEST(InfoNce, IdenticalEmbeddingsGiveLogB) {
  std::mt19937_64 rng(6);
  for (std::size_t b : {2u, 4u, 8u}) {
    auto one = random_tensor<double>({3, 4}, rng);
    std::vector<Tensor<double>> same(b, one);
    EXPECT_NEAR(infonce_loss(same, same, same, 0.1).item(), std::log(double(b)), 1e-5);
  }
}

TEST(InfoNce, AntipodalPairIsNearlyZero) {
  // B = 2 is the largest batch where every off-diagonal cosine can be -1.
  auto e = Tensor<double>({2, 3}, {1, 2, 3, -1, 0, 2});
  auto neg = scale(e, -1.0);
  std::vector<Tensor<double>> x{e, neg};
  const double expect = std::log1p(std::exp(-20.0));
  EXPECT_NEAR(infonce_loss(x, x, x, 0.1).item(), expect, 1e-12);
  EXPECT_LT(infonce_loss(x, x, x, 0.1).item(), 1e-6);
}

TEST(InfoNce, MatchesLogSumExpOracle) {
  std::mt19937_64 rng(7);
  const std::size_t b = 4;
  auto v = random_batch(b, rng), a = random_batch(b, rng), t = random_batch(b, rng);
  const double tau = 0.3;
  auto cosine = [](const Tensor<double>& x, const Tensor<double>& y) {
    double total = 0.0;
    for (std::size_t l = 0; l < x.dim(0); ++l) {
      double dot = 0.0, nx = 0.0, ny = 0.0;
      for (std::size_t d = 0; d < x.dim(1); ++d) {
        dot += x.at(l, d) * y.at(l, d);
        nx += x.at(l, d) * x.at(l, d);
        ny += y.at(l, d) * y.at(l, d);
      }
      total += dot / ((std::sqrt(nx) + 1e-12) * (std::sqrt(ny) + 1e-12));
    }
    return total / double(x.dim(0));
  };
  auto term = [&](const std::vector<Tensor<double>>& e) {
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      double denom = 0.0;
      for (std::size_t j = 0; j < b; ++j) denom += std::exp(cosine(e[i], t[j]) / tau);
      loss += -std::log(std::exp(cosine(e[i], t[i]) / tau) / denom);
    }
    return loss / double(b);
  };
  EXPECT_NEAR(infonce_loss(v, a, t, tau).item(), 0.5 * (term(v) + term(a)), 1e-12);
}

TEST(InfoNce, NonNegativeAndScaleInvariant) {
  std::mt19937_64 rng(8);
  auto v = random_batch(5, rng), a = random_batch(5, rng), t = random_batch(5, rng);
  const double base = infonce_loss(v, a, t, 0.1).item();
  EXPECT_GE(base, 0.0);
  std::uniform_real_distribution<double> c(0.1, 10.0);
  auto rescale = [&](std::vector<Tensor<double>>& xs) {
    for (auto& x : xs) {
      auto y = x.detach();
      for (std::size_t l = 0; l < y.dim(0); ++l) {
        const double k = c(rng);
        for (std::size_t d = 0; d < y.dim(1); ++d) y.mutable_data()[l * y.dim(1) + d] *= k;
      }
      x = y;
    }
  };
  rescale(v);
  rescale(a);
  rescale(t);
  EXPECT_LT(std::abs(infonce_loss(v, a, t, 0.1).item() - base), 1e-6);
  EXPECT_THROW(infonce_loss(v, a, t, 0.0), ContractError);
}

TEST(InfoNce, GradientCheck) {
  std::mt19937_64 rng(9);
  ParamStore<double> store;
  std::vector<Tensor<double>> v, a, t;
  for (int i = 0; i < 3; ++i) {
    v.push_back(store.add("v" + std::to_string(i), testing::param({2, 3}, rng)));
    a.push_back(store.add("a" + std::to_string(i), testing::param({2, 3}, rng)));
    t.push_back(store.add("t" + std::to_string(i), testing::param({2, 3}, rng)));
  }
  auto f = [&] { return infonce_loss(v, a, t, 0.5); };
  EXPECT_LT(finite_diff_check(f, store, {}).max_rel_error, 1e-5);
}

}  // namespace
}  // namespace hcmen
