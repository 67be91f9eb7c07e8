#include "capvae/layers.hpp"

#include <cmath>

#include "capvae/ops.hpp"

namespace capvae::nn {

template <typename T>
void glorot_uniform(BasicTensor<T>& w, std::size_t fan_in, std::size_t fan_out, CounterRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
DenseLayer<T>::DenseLayer(const std::string& name, std::size_t in, std::size_t out, CounterRng& rng)
    : weight(name + ".w", BasicTensor<T>(Shape{in, out})), bias(name + ".b", BasicTensor<T>(Shape{out})) {
  glorot_uniform(weight.value, in, out, rng);
}

template <typename T>
Var<T> DenseLayer<T>::operator()(Var<T> x) {
  auto& g = *x.graph;
  return dense(x, g.parameter(weight), g.parameter(bias));
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(const std::string& name, std::size_t in, std::size_t out,
                            std::size_t kernel, std::size_t s, CounterRng& rng)
    : weight(name + ".w", BasicTensor<T>(Shape{out, in, kernel, kernel})),
      bias(name + ".b", BasicTensor<T>(Shape{out})),
      stride(s) {
  glorot_uniform(weight.value, in * kernel * kernel, out * kernel * kernel, rng);
}

template <typename T>
Var<T> Conv2dLayer<T>::operator()(Var<T> x) {
  auto& g = *x.graph;
  return conv2d(x, g.parameter(weight), g.parameter(bias), stride);
}

template <typename T>
ConvTranspose2dLayer<T>::ConvTranspose2dLayer(const std::string& name, std::size_t in,
                                              std::size_t out, std::size_t kernel, std::size_t s,
                                              CounterRng& rng)
    : weight(name + ".w", BasicTensor<T>(Shape{in, out, kernel, kernel})),
      bias(name + ".b", BasicTensor<T>(Shape{out})),
      stride(s) {
  glorot_uniform(weight.value, in * kernel * kernel, out * kernel * kernel, rng);
}

template <typename T>
Var<T> ConvTranspose2dLayer<T>::operator()(Var<T> x) {
  auto& g = *x.graph;
  return conv2d_transpose(x, g.parameter(weight), g.parameter(bias), stride);
}

template void glorot_uniform(BasicTensor<float>&, std::size_t, std::size_t, CounterRng&);
template void glorot_uniform(BasicTensor<double>&, std::size_t, std::size_t, CounterRng&);
template struct DenseLayer<float>;
template struct DenseLayer<double>;
template struct Conv2dLayer<float>;
template struct Conv2dLayer<double>;
template struct ConvTranspose2dLayer<float>;
template struct ConvTranspose2dLayer<double>;

}  // namespace capvae::nn
