#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "hcmen/tensor.hpp"

namespace hcmen {

enum class DiffScheme {
  // (f(x+eps) - f(x-eps)) / 2eps
  Central,
  // One Richardson step on central differences, (4 D(eps/2) - D(eps)) / 3,
  // which cancels the eps^2 error term.
  Richardson,
  // Ridders' extrapolation of central differences, starting at eps and
  // shrinking the step until the tableau error estimate stops improving.
  Ridders,
};

struct GradCheckOptions {
  double eps = 1e-6;
  DiffScheme scheme = DiffScheme::Central;
  // Coordinates probed per tensor; tensors at or below this size are checked
  // exhaustively, larger ones at a seeded random sample.
  std::size_t max_coords_per_tensor = 64;
  std::uint64_t seed = 0;
  // Test hook: added to every analytic gradient before comparison.
  double analytic_offset = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Compares backward() gradients of `loss` against central differences
//   |analytic - (f(x+eps) - f(x-eps)) / 2eps| / (|analytic| + |numeric| + 1e-12)
// and reports the worst coordinate. `loss` must rebuild the graph from the
// current parameter values on every call. Throws NumericError if f is not
// finite at a probed point.
GradCheckResult finite_diff_check(const std::function<Tensor<double>()>& loss,
                                  ParamStore<double>& params, const GradCheckOptions& options = {});

// Same comparison for the analytic gradients of `loss` over `params`, with the
// numeric side taken from `reference_loss`, which reads `reference`: a copy of
// `params` in extended precision (same names, shapes and values).
GradCheckResult finite_diff_check(const std::function<Tensor<double>()>& loss,
                                  ParamStore<double>& params,
                                  const std::function<Tensor<long double>()>& reference_loss,
                                  ParamStore<long double>& reference,
                                  const GradCheckOptions& options = {});

}  // namespace hcmen
