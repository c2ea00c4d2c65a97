#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hcmen/config.hpp"
#include "hcmen/modality.hpp"
#include "hcmen/tensor.hpp"

namespace hcmen {

struct ComponentCheck {
  std::string module;
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;

  bool passed() const { return max_rel_error < tolerance; }
};

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  // Central-difference step of the per-op checks.
  double eps = 1e-6;
  // Step of the extrapolated central difference in the full-model check.
  double model_step = 2e-4;
  // Test hook forwarded to finite_diff_check.
  double analytic_offset = 0.0;
};

// The smallest end-to-end configuration checked by the suite:
// L=4, D=8, N=2, Z=1, batch of 2.
ModelConfig tiny_gradcheck_config();

// Two synthetic utterances sized for `cfg`, token-corrupted at rate 0.25.
ModalityBatch tiny_gradcheck_batch(const ModelConfig& cfg, std::uint64_t seed);

// Replaces every value with a draw at unit order (fan-in order for tensors
// that feed the output) so no gradient is lost in roundoff.
void redraw_for_gradcheck(ParamStore<double>& store, std::mt19937_64& rng);

// Double-precision finite-difference checks of every differentiable op and
// of the full training loss, one entry per component.
std::vector<ComponentCheck> run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace hcmen
