#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

#include "hcmen/tensor.hpp"

namespace hcmen {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(data));
}

// fan-in scaled uniform, the usual default for linear layers
template <typename T>
Tensor<T> fan_in_tensor(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  return uniform_tensor<T>(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

// splitmix64 finalizer, used to derive independent stream seeds
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return step(step(step(a) ^ b) ^ c);
}

}  // namespace hcmen
