#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hcmen/error.hpp"
#include "hcmen/gradcheck.hpp"
#include "hcmen/gradcheck_suite.hpp"
#include "hcmen/ops.hpp"
#include "hcmen/ssm.hpp"
#include "test_util.hpp"

namespace hcmen {
namespace {

using testing::max_rel_error;
using testing::param;
using testing::random_tensor;
using testing::weighted_sum;

DiscreteSsm<double> scalar_lti(double a_bar, double b_bar, double c) {
  DiscreteSsm<double> s;
  s.states = 1;
  s.a_bar = {a_bar};
  s.b_bar = {b_bar};
  s.c = {c};
  return s;
}

std::vector<double> v(std::initializer_list<double> x) { return x; }

TEST(Zoh, ClosedForms) {
  auto half = discretize_zoh(-1.0, 1.0, std::log(2.0));
  EXPECT_NEAR(half.a_bar, 0.5, 1e-12);
  EXPECT_NEAR(half.b_bar, 0.5, 1e-12);
  auto hold = discretize_zoh(-3.0, 2.0, 0.0);
  EXPECT_EQ(hold.a_bar, 1.0);
  EXPECT_EQ(hold.b_bar, 0.0);
  auto lim = discretize_zoh(1e-10, 3.0, 0.25);
  EXPECT_NEAR(lim.b_bar, 0.75, 1e-9);
  auto small = discretize_zoh(-1e-6, 3.0, 0.25);
  EXPECT_NEAR(small.b_bar, 0.75, 1e-6);
  EXPECT_THROW(discretize_zoh(-1.0, 1.0, -0.1), ContractError);
}

TEST(Zoh, StableForNegativeA) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> la(-3.0, 3.0), ld(1e-3, 2.0);
  for (int i = 0; i < 200; ++i) {
    const double a = -std::exp(la(rng));
    const auto z = discretize_zoh(a, 1.0, ld(rng));
    EXPECT_GT(z.a_bar, 0.0);
    EXPECT_LT(z.a_bar, 1.0);
    EXPECT_GT(z.b_bar, 0.0);
  }
}

TEST(RecurrentScan, HandRecurrence) {
  auto s = scalar_lti(0.5, 1.0, 1.0);
  const auto x = v({1, 1, 1});
  EXPECT_EQ(recurrent_scan<double>(s, x), v({1, 1.5, 1.75}));
  EXPECT_EQ(recurrent_scan<double>(s, v({0, 0, 0})), v({0, 0, 0}));
  auto memoryless = scalar_lti(0.0, 2.0, 3.0);
  EXPECT_EQ(recurrent_scan<double>(memoryless, v({1, -1, 0.5})), v({6, -6, 3}));
}

TEST(RecurrentScan, LengthMismatchIsDimensionError) {
  DiscreteSsm<double> s;
  s.states = 1;
  s.steps = 3;
  s.a_bar = {0.5, 0.5, 0.5};
  s.b_bar = {1, 1, 1};
  s.c = {1, 1, 1};
  EXPECT_THROW(recurrent_scan<double>(s, v({1, 1})), DimensionError);
}

TEST(LtiKernel, ClosedFormAndEquivalence) {
  auto s = scalar_lti(0.5, 1.0, 1.0);
  const auto k = lti_kernel(s, 3);
  EXPECT_EQ(k, v({1, 0.5, 0.25}));
  const auto x = v({1, 1, 1});
  EXPECT_EQ(causal_convolve<double>(x, k), v({1, 1.5, 1.75}));
  auto zero_c = scalar_lti(0.5, 1.0, 0.0);
  for (double kj : lti_kernel(zero_c, 5)) EXPECT_EQ(kj, 0.0);
}

TEST(LtiKernel, RejectsSelectiveParameters) {
  DiscreteSsm<double> s;
  s.states = 1;
  s.steps = 2;
  s.a_bar = {0.5, 0.4};
  s.b_bar = {1, 1};
  s.c = {1, 1};
  EXPECT_THROW(lti_kernel(s, 2), ContractError);
}

class LtiEquivalence : public ::testing::TestWithParam<int> {};

TEST_P(LtiEquivalence, RecurrentEqualsConvolutionInFloat) {
  std::mt19937_64 rng(100 + GetParam());
  std::uniform_int_distribution<std::size_t> nd(1, 8), ld(1, 64);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f), la(-2.0f, 1.5f), dl(0.01f, 1.0f);
  const std::size_t n = nd(rng), len = ld(rng);
  std::vector<float> a(n), b(n), c(n), x(len);
  for (auto& e : a) e = -std::exp(la(rng));
  for (auto& e : b) e = u(rng);
  for (auto& e : c) e = u(rng);
  for (auto& e : x) e = u(rng);
  auto s = discretize_lti<float>(a, b, c, dl(rng));
  const auto y = recurrent_scan<float>(s, x);
  const auto k = lti_kernel(s, len);
  const auto z = causal_convolve<float>(x, k);
  for (std::size_t t = 0; t < len; ++t) EXPECT_NEAR(y[t], z[t], 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Random, LtiEquivalence, ::testing::Range(0, 20));

TEST(RecurrentScan, Linearity) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(4), b(4), c(4), x1(20), x2(20), mix(20);
  for (auto& e : a) e = -std::exp(u(rng));
  for (auto& e : b) e = u(rng);
  for (auto& e : c) e = u(rng);
  for (auto& e : x1) e = u(rng);
  for (auto& e : x2) e = u(rng);
  const double alpha = 0.7, beta = -1.3;
  for (std::size_t t = 0; t < 20; ++t) mix[t] = alpha * x1[t] + beta * x2[t];
  auto s = discretize_lti<double>(a, b, c, 0.3);
  const auto y1 = recurrent_scan<double>(s, x1), y2 = recurrent_scan<double>(s, x2);
  const auto y = recurrent_scan<double>(s, mix);
  for (std::size_t t = 0; t < 20; ++t) EXPECT_NEAR(y[t], alpha * y1[t] + beta * y2[t], 1e-5);
}

TEST(RecurrentScan, StateBound) {
  // |y| <= sum_n |c_n| |b_bar_n| max|x| / (1 - a_bar_n)
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(3), b(3), c(3), x(200);
  for (auto& e : a) e = -std::exp(u(rng));
  for (auto& e : b) e = u(rng);
  for (auto& e : c) e = u(rng);
  for (auto& e : x) e = u(rng);
  auto s = discretize_lti<double>(a, b, c, 0.5);
  double bound = 0.0;
  for (std::size_t n = 0; n < 3; ++n) bound += std::abs(c[n] * s.b_bar[n]) / (1.0 - s.a_bar[n]);
  for (double y : recurrent_scan<double>(s, x)) EXPECT_LE(std::abs(y), bound);
}

// Constant B_t, C_t and delta per channel turn the fused scan into D_inner
// independent LTI systems.
TEST(ScanKernel, ConstantCoefficientsMatchLtiOracle) {
  std::mt19937_64 rng(9);
  const std::size_t len = 12, inner = 3, n = 4;
  auto x = random_tensor<double>({len, inner}, rng);
  auto a = random_tensor<double>({inner, n}, rng, -2.0, -0.1);
  std::vector<double> bv(n), cv(n), dv(inner);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.05, 1.0);
  for (auto& e : bv) e = u(rng);
  for (auto& e : cv) e = u(rng);
  for (auto& e : dv) e = pos(rng);
  std::vector<double> b(len * n), c(len * n), delta(len * inner);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t k = 0; k < n; ++k) b[t * n + k] = bv[k], c[t * n + k] = cv[k];
    for (std::size_t d = 0; d < inner; ++d) delta[t * inner + d] = dv[d];
  }
  auto y = scan_kernel(x, Tensor<double>({len, inner}, delta), a, Tensor<double>({len, n}, b),
                       Tensor<double>({len, n}, c));
  for (std::size_t d = 0; d < inner; ++d) {
    std::vector<double> ad(n), xd(len);
    for (std::size_t k = 0; k < n; ++k) ad[k] = a[d * n + k];
    for (std::size_t t = 0; t < len; ++t) xd[t] = x[t * inner + d];
    auto s = discretize_lti<double>(ad, bv, cv, dv[d]);
    const auto ref = causal_convolve<double>(xd, lti_kernel(s, len));
    for (std::size_t t = 0; t < len; ++t) EXPECT_NEAR(y[t * inner + d], ref[t], 1e-10);
  }
}

SsmParams<double> ssm_params(ParamStore<double>& store, std::size_t inner, std::size_t n,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto p = make_ssm_params(store, "ssm", inner, n, rng);
  for (auto& [name, t] : store) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& e : t.mutable_data()) e += u(rng);
  }
  return p;
}

TEST(SelectiveScan, ZeroInputGivesZero) {
  ParamStore<double> store;
  auto p = ssm_params(store, 4, 2, 1);
  auto y = selective_scan(p, Tensor<double>::zeros({6, 4}));
  for (double e : y.data()) EXPECT_EQ(e, 0.0);
}

TEST(SelectiveScan, TimeConstantInputReducesToLti) {
  ParamStore<double> store;
  const std::size_t inner = 3, n = 2, len = 9;
  auto p = ssm_params(store, inner, n, 2);
  std::mt19937_64 rng(3);
  auto row = random_tensor<double>({1, inner}, rng);
  std::vector<std::size_t> rows(len, 0);
  auto x = gather_rows(row, rows);
  auto y = selective_scan(p, x);

  auto delta = softplus(linear(row, p.dt_weight, p.dt_bias));
  auto bt = linear(row, p.b_weight);
  auto ct = linear(row, p.c_weight);
  for (std::size_t d = 0; d < inner; ++d) {
    std::vector<double> a(n), b(n), c(n), xd(len, row[d]);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = -std::exp(p.a_log[d * n + k]);
      b[k] = bt[k];
      c[k] = ct[k];
    }
    auto s = discretize_lti<double>(a, b, c, delta[d]);
    const auto ref = causal_convolve<double>(xd, lti_kernel(s, len));
    for (std::size_t t = 0; t < len; ++t)
      EXPECT_NEAR(y[t * inner + d], ref[t] + p.d_skip[d] * row[d], 1e-4);
  }
}

TEST(SelectiveScan, GradientCheck) {
  ParamStore<double> store;
  auto p = ssm_params(store, 4, 3, 4);
  std::mt19937_64 rng(5);
  redraw_for_gradcheck(store, rng);
  auto x = param({6, 4}, rng);
  auto f = [&] { return weighted_sum(selective_scan(p, x), 7); };
  EXPECT_LT(max_rel_error(f, {x, p.a_log, p.dt_weight, p.dt_bias, p.b_weight, p.c_weight, p.d_skip}),
            1e-5);
  store.add("x", x);
  EXPECT_LT(finite_diff_check(f, store, {}).max_rel_error, 1e-5);
}

TEST(SelectiveScan, InitialStepSizesInRange) {
  ParamStore<double> store;
  std::mt19937_64 rng(6);
  auto p = make_ssm_params(store, "ssm", 16, 4, rng);
  auto delta = softplus(p.dt_bias);
  for (double d : delta.data()) {
    EXPECT_GE(d, 1e-3 - 1e-12);
    EXPECT_LE(d, 1e-1 + 1e-12);
  }
  for (std::size_t d = 0; d < 16; ++d)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(p.a_log[d * 4 + k], std::log(double(k + 1)), 1e-12);
}

MambaDims small_dims() { return {.model_dim = 4, .inner_dim = 8, .state_dim = 2, .conv_width = 4}; }

TEST(MambaBlock, ZeroOutProjectionGivesZero) {
  ParamStore<double> store;
  std::mt19937_64 rng(10);
  auto p = make_mamba_block(store, "m", small_dims(), rng);
  testing::fill(p.out_weight, 0.0);
  auto y = mamba_block(p, random_tensor<double>({5, 4}, rng));
  for (double e : y.data()) EXPECT_EQ(e, 0.0);
}

TEST(MambaBlock, ShapePreserved) {
  ParamStore<float> store;
  std::mt19937_64 rng(11);
  MambaDims dims{.model_dim = 12, .inner_dim = 24, .state_dim = 4, .conv_width = 4};
  auto p = make_mamba_block(store, "m", dims, rng);
  auto y = mamba_block(p, random_tensor<float>({7, 12}, rng));
  EXPECT_EQ(y.shape(), (Shape{7, 12}));
  EXPECT_THROW(mamba_block(p, random_tensor<float>({7, 5}, rng)), ConfigError);
}

TEST(MambaBlock, GradientCheck) {
  ParamStore<double> store;
  std::mt19937_64 rng(12);
  auto p = make_mamba_block(store, "m", small_dims(), rng);
  redraw_for_gradcheck(store, rng);
  auto x = store.add("x", param({4, 4}, rng));
  auto f = [&] { return weighted_sum(mamba_block(p, x), 3); };
  GradCheckOptions opts;
  opts.max_coords_per_tensor = 1000;
  EXPECT_LT(finite_diff_check(f, store, opts).max_rel_error, 1e-5);
}

TEST(BiMamba, SingleStepTiedIsTwiceTheBlock) {
  ParamStore<double> store;
  std::mt19937_64 rng(13);
  auto p = make_bi_mamba(store, "bi", small_dims(), rng, true);
  testing::fill(p.forward.out_weight, 0.25);
  auto x = random_tensor<double>({1, 4}, rng);
  auto y = bi_mamba(p, x);
  auto single = mamba_block(p.forward, x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], 2.0 * single[i], 1e-12);
}

TEST(BiMamba, TiedIsReflectionEquivariant) {
  ParamStore<double> store;
  std::mt19937_64 rng(14);
  auto p = make_bi_mamba(store, "bi", small_dims(), rng, true);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& [name, t] : store)
    for (auto& e : t.mutable_data()) e += u(rng);
  auto x = random_tensor<double>({9, 4}, rng);
  auto lhs = bi_mamba(p, reverse_time(x));
  auto rhs = reverse_time(bi_mamba(p, x));
  EXPECT_LT(testing::max_abs_diff(lhs, rhs), 1e-5);
}

TEST(BiMamba, UntiedDiffersFromSingleDirection) {
  ParamStore<double> store;
  std::mt19937_64 rng(15);
  auto p = make_bi_mamba(store, "bi", small_dims(), rng);
  testing::fill(p.forward.out_weight, 0.3);
  testing::fill(p.backward.out_weight, -0.2);
  auto x = random_tensor<double>({6, 4}, rng);
  EXPECT_GT(testing::max_abs_diff(bi_mamba(p, x), mamba_block(p.forward, x)), 1e-6);
  EXPECT_EQ(p.forward.in_weight.shape(), p.backward.in_weight.shape());
}

}  // namespace
}  // namespace hcmen
