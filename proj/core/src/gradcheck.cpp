#include "hcmen/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "hcmen/error.hpp"

namespace hcmen {

namespace {

template <typename R>
R probe(const std::function<Tensor<R>()>& f) {
  NoGradGuard guard;
  const R v = f().item();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: perturbed loss is not finite");
  return v;
}

template <typename R>
R central(const std::function<Tensor<R>()>& f, R& x, R h) {
  const R saved = x;
  x = saved + h;
  const R plus = probe(f);
  x = saved - h;
  const R minus = probe(f);
  x = saved;
  return (plus - minus) / (2 * h);
}

// Numerical Recipes dfridr: Neville tableau over steps h, h/1.4, h/1.4^2, ...
template <typename R>
R ridders(const std::function<Tensor<R>()>& f, R& x, R h) {
  constexpr int kTable = 10;
  constexpr R kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2;
  std::array<std::array<R, kTable>, kTable> a{};
  a[0][0] = central(f, x, h);
  R best = a[0][0];
  R err = std::numeric_limits<R>::max();
  for (int i = 1; i < kTable; ++i) {
    h /= kShrink;
    a[0][i] = central(f, x, h);
    R fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1);
      fac *= kShrink2;
      const R errt = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (errt <= err) {
        err = errt;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
  }
  return best;
}

template <typename R>
GradCheckResult run_check(const std::function<Tensor<double>()>& loss, ParamStore<double>& params,
                          const std::function<Tensor<R>()>& reference_loss, ParamStore<R>& reference,
                          const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");
  if (reference.size() != params.size()) {
    throw ContractError("finite_diff_check: reference store does not mirror the parameters");
  }

  params.zero_grad();
  {
    auto value = loss();
    if (!std::isfinite(value.item())) throw NumericError("finite_diff_check: loss is not finite");
    backward(value);
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (auto& [name, tensor] : params) {
    if (!reference.contains(name) || reference.at(name).numel() != tensor.numel()) {
      throw ContractError("finite_diff_check: reference has no tensor matching '" + name + "'");
    }
    const auto grad = tensor.grad();
    std::vector<double> analytic(grad.begin(), grad.end());

    std::vector<std::size_t> coords(tensor.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }

    auto values = reference.at(name).mutable_data();
    const R h = static_cast<R>(options.eps);
    for (auto i : coords) {
      R d = 0;
      switch (options.scheme) {
        case DiffScheme::Central:
          d = central(reference_loss, values[i], h);
          break;
        case DiffScheme::Richardson:
          d = (4 * central(reference_loss, values[i], h / 2) - central(reference_loss, values[i], h)) / 3;
          break;
        case DiffScheme::Ridders:
          d = ridders(reference_loss, values[i], h);
          break;
      }
      const double numeric = static_cast<double>(d);
      const double a = analytic[i] + options.analytic_offset;
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        result.worst_param = name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Tensor<double>()>& loss,
                                  ParamStore<double>& params, const GradCheckOptions& options) {
  return run_check<double>(loss, params, loss, params, options);
}

GradCheckResult finite_diff_check(const std::function<Tensor<double>()>& loss,
                                  ParamStore<double>& params,
                                  const std::function<Tensor<long double>()>& reference_loss,
                                  ParamStore<long double>& reference,
                                  const GradCheckOptions& options) {
  return run_check<long double>(loss, params, reference_loss, reference, options);
}

}  // namespace hcmen
