#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "hcmen/tensor.hpp"

namespace hcmen {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are keyed by parameter name so the
// optimizer survives a rebuild of the store with identical names.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Every parameter must carry a gradient (ContractError otherwise).
  void step(ParamStore<T>& params);
  std::size_t steps_taken() const { return step_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::size_t step_ = 0;
  std::map<std::string, std::vector<T>> first_;
  std::map<std::string, std::vector<T>> second_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace hcmen
