#include "capvae/adam.hpp"

#include <cmath>
#include <string>

#include "capvae/error.hpp"

namespace capvae::nn {

template <typename T>
AdamState<T>::AdamState(std::span<Parameter<T>* const> params, AdamHyper h) : hyper(h) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const auto* p : params) {
    first_moment.emplace_back(p->value.shape());
    second_moment.emplace_back(p->value.shape());
  }
}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw StateError("adam_step: optimizer tracks " + std::to_string(state.first_moment.size()) +
                     " moments for " + std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& shape = params[i]->value.shape();
    if (state.first_moment[i].shape() != shape || state.second_moment[i].shape() != shape ||
        params[i]->grad.shape() != shape)
      throw StateError("adam_step: moment shape mismatch for parameter " + params[i]->name + " " +
                       shape_string(shape));
  }

  const auto& h = state.hyper;
  const std::uint64_t t = ++state.step;
  const double correction1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T step_size = static_cast<T>(h.learning_rate / correction1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
  const T eps = static_cast<T>(h.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const T g = p.grad[k];
      m[k] = b1 * m[k] + (T{1} - b1) * g;
      v[k] = b2 * v[k] + (T{1} - b2) * g * g;
      p.value[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_c2 + eps);
    }
    if (!p.value.all_finite()) throw NumericError("adam_step: non-finite value in " + p.name);
    p.zero_grad();
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<Parameter<float>* const>, AdamState<float>&);
template void adam_step(std::span<Parameter<double>* const>, AdamState<double>&);

}  // namespace capvae::nn
