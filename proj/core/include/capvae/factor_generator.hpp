#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "capvae/graph.hpp"
#include "capvae/objectives.hpp"
#include "capvae/synthdata.hpp"
#include "capvae/vae_model.hpp"

// Ground-truth factor generator: each known factor passes through its own
// learnable-gain, learnable-noise Gaussian channel, and a decoder reconstructs
// the image from the noisy channel outputs under a capacity target.
namespace capvae::generator {

// Maps every factor to [-1, 1]. Categorical and periodic factors (shape,
// rotation, hue) go through their grid index; the rest are affine over the
// grid range. Single-valued factors map to 0.
std::vector<double> normalize_factors(const synth::FactorVector& f, const synth::FactorSpec& spec);

inline constexpr double kInitialGain = 0.1;
// Upper bound on log t_i: channel noise never exceeds the prior's scale.
inline constexpr double kMaxLogNoise = 0.0;

template <typename T>
struct FactorChannels {
  nn::Parameter<T> gain;       // s_i, [factors]
  nn::Parameter<T> log_noise;  // log t_i, [factors], within [kLogSigmaMin, kMaxLogNoise]

  explicit FactorChannels(std::size_t factors);
  std::size_t size() const { return gain.value.size(); }
  void collect(std::vector<nn::Parameter<T>*>& out) { out.push_back(&gain), out.push_back(&log_noise); }
  // Moves log_noise back into its range; called after every optimizer step.
  void project();
};

template <typename T>
struct FactorEncoding {
  nn::Var<T> mu;         // s_i * f_i, [batch, factors]
  nn::Var<T> log_noise;  // log t_i broadcast to [batch, factors]
  nn::Var<T> z;          // mu + t * eps
};

// z_i = s_i * fnorm_i + t_i * eps_i for a batch fnorm [batch, factors].
template <typename T>
FactorEncoding<T> channel_forward(nn::Var<T> fnorm, FactorChannels<T>& channels, const nn::BasicTensor<T>& eps);

// Batch-mean KL of each channel against N(0,1), as a graph node [factors].
template <typename T>
nn::Var<T> per_factor_kl(const FactorEncoding<T>& enc);

// Value-level counterpart for reporting: same closed form, no graph.
std::vector<double> per_factor_kl(std::span<const double> gain, std::span<const double> log_noise,
                                  const std::vector<std::vector<double>>& fnorm_batch);

objectives::LossBreakdown generator_train_objective(double loglik, std::span<const double> per_factor_kl,
                                                    double gamma, double capacity);

template <typename T>
class FactorGenerator {
 public:
  FactorGenerator(std::size_t factors, const vae::ModelConfig& decoder_cfg, std::uint64_t seed);

  FactorChannels<T>& channels() { return channels_; }
  vae::Decoder<T>& decoder() { return *decoder_; }
  const vae::ModelConfig& config() const { return cfg_; }

  std::vector<nn::Parameter<T>*> parameters();

 private:
  vae::ModelConfig cfg_;
  FactorChannels<T> channels_;
  std::unique_ptr<vae::Decoder<T>> decoder_;
};

extern template struct FactorChannels<float>;
extern template struct FactorChannels<double>;
extern template class FactorGenerator<float>;
extern template class FactorGenerator<double>;

}  // namespace capvae::generator
