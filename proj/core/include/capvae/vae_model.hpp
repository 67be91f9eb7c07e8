#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "capvae/graph.hpp"
#include "capvae/layers.hpp"
#include "capvae/rng.hpp"

namespace capvae::vae {

enum class Architecture { conv, dense };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct ModelConfig {
  Architecture architecture = Architecture::conv;
  std::size_t n_latents = 10;
  std::size_t channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<std::size_t> hidden{256, 256};
  std::size_t conv_channels = 32;
  std::size_t conv_layers = 4;
  std::size_t kernel = 4;

  // The dense variant used for blob experiments: 1024 -> 256 -> 256 -> 2x10.
  static ModelConfig dense_blob(std::size_t resolution = 32);

  void validate() const;
  std::size_t input_size() const { return channels * height * width; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

inline constexpr double kLogSigmaMin = -6.0;
inline constexpr double kLogSigmaMax = 4.0;

template <typename T>
struct GaussianPosterior {
  nn::Var<T> mu;         // [batch, n_latents]
  nn::Var<T> log_sigma;  // [batch, n_latents], clamped
};

template <typename T>
struct LatentSample {
  nn::Var<T> z;              // mu + exp(log_sigma) * eps
  nn::BasicTensor<T> eps;    // the noise draw, not differentiated
};

// z = mu + exp(log_sigma) * eps; gradients reach mu and log_sigma only.
template <typename T>
LatentSample<T> reparameterize(const GaussianPosterior<T>& post, nn::BasicTensor<T> eps);

// Maps [batch, input_dim] codes to Bernoulli logits [batch, C, H, W]. Shared by
// the VAE and the ground-truth factor generator.
template <typename T>
class Decoder {
 public:
  Decoder(const ModelConfig& cfg, std::size_t input_dim, CounterRng& rng, const std::string& prefix = "dec");

  nn::Var<T> operator()(nn::Var<T> z);
  void collect(std::vector<nn::Parameter<T>*>& out);
  std::size_t input_dim() const { return input_dim_; }

 private:
  ModelConfig cfg_;
  std::size_t input_dim_;
  std::vector<nn::DenseLayer<T>> dense_;
  std::vector<nn::ConvTranspose2dLayer<T>> deconv_;
};

template <typename T>
class Encoder {
 public:
  Encoder(const ModelConfig& cfg, CounterRng& rng, const std::string& prefix = "enc");

  // [batch, C, H, W] -> [batch, 2 * n_latents] (means first, then log sigmas)
  nn::Var<T> operator()(nn::Var<T> x);
  void collect(std::vector<nn::Parameter<T>*>& out);

 private:
  ModelConfig cfg_;
  std::vector<nn::Conv2dLayer<T>> conv_;
  std::vector<nn::DenseLayer<T>> dense_;
};

template <typename T>
class VaeModel {
 public:
  VaeModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  GaussianPosterior<T> encode(nn::Var<T> x);
  nn::Var<T> decode(nn::Var<T> z);

  // Parameter pointers in a stable order (encoder then decoder).
  std::vector<nn::Parameter<T>*> parameters();

  // Graph-free inference helpers.
  struct PosteriorValues {
    nn::BasicTensor<T> mu;
    nn::BasicTensor<T> log_sigma;
  };
  PosteriorValues infer(const nn::BasicTensor<T>& x);
  nn::BasicTensor<T> decode_logits(const nn::BasicTensor<T>& z);

 private:
  void check_input(const nn::BasicTensor<T>& x) const;

  ModelConfig cfg_;
  std::unique_ptr<Encoder<T>> encoder_;
  std::unique_ptr<Decoder<T>> decoder_;
};

extern template class Decoder<float>;
extern template class Decoder<double>;
extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class VaeModel<float>;
extern template class VaeModel<double>;

}  // namespace capvae::vae
