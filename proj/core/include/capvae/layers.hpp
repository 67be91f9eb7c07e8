#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capvae/graph.hpp"
#include "capvae/rng.hpp"

namespace capvae::nn {

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(BasicTensor<T>& w, std::size_t fan_in, std::size_t fan_out, CounterRng& rng);

template <typename T>
struct DenseLayer {
  Parameter<T> weight;  // [in, out]
  Parameter<T> bias;    // [out]

  DenseLayer(const std::string& name, std::size_t in, std::size_t out, CounterRng& rng);
  Var<T> operator()(Var<T> x);
  void collect(std::vector<Parameter<T>*>& out) { out.push_back(&weight), out.push_back(&bias); }
};

template <typename T>
struct Conv2dLayer {
  Parameter<T> weight;  // [out, in, k, k]
  Parameter<T> bias;    // [out]
  std::size_t stride;

  Conv2dLayer(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
              std::size_t stride, CounterRng& rng);
  Var<T> operator()(Var<T> x);
  void collect(std::vector<Parameter<T>*>& out) { out.push_back(&weight), out.push_back(&bias); }
};

template <typename T>
struct ConvTranspose2dLayer {
  Parameter<T> weight;  // [in, out, k, k]
  Parameter<T> bias;    // [out]
  std::size_t stride;

  ConvTranspose2dLayer(const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kernel, std::size_t stride, CounterRng& rng);
  Var<T> operator()(Var<T> x);
  void collect(std::vector<Parameter<T>*>& out) { out.push_back(&weight), out.push_back(&bias); }
};

extern template struct DenseLayer<float>;
extern template struct DenseLayer<double>;
extern template struct Conv2dLayer<float>;
extern template struct Conv2dLayer<double>;
extern template struct ConvTranspose2dLayer<float>;
extern template struct ConvTranspose2dLayer<double>;

}  // namespace capvae::nn
