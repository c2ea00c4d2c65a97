#include "hcmen/adam.hpp"

#include <cmath>

#include "hcmen/error.hpp"

namespace hcmen {

template <typename T>
void Adam<T>::step(ParamStore<T>& params) {
  for (const auto& [name, tensor] : params) {
    if (!tensor.has_grad()) throw ContractError("adam: parameter '" + name + "' has no gradient");
  }
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
  for (auto& [name, tensor] : params) {
    auto& m = first_[name];
    auto& v = second_[name];
    if (m.size() != tensor.numel()) {
      m.assign(tensor.numel(), T(0));
      v.assign(tensor.numel(), T(0));
    }
    auto w = tensor.mutable_data();
    const auto g = tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / c1;
      const double v_hat = static_cast<double>(v[i]) / c2;
      w[i] -= static_cast<T>(options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace hcmen
