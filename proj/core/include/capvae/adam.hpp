#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "capvae/graph.hpp"

namespace capvae::nn {

struct AdamHyper {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<BasicTensor<T>> first_moment;
  std::vector<BasicTensor<T>> second_moment;

  AdamState() = default;
  // Zero moments shaped like `params`.
  AdamState(std::span<Parameter<T>* const> params, AdamHyper h);
};

// One bias-corrected Adam update over `params`, then zeroes their gradients.
// Throws StateError when the moment tensors do not line up with the parameters.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace capvae::nn
