#include "capvae/factor_generator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "capvae/error.hpp"
#include "capvae/ops.hpp"

namespace capvae::generator {

namespace {

bool index_coded(const std::string& name) { return name == "shape" || name == "rotation" || name == "hue"; }

std::size_t require_factors(std::size_t factors) {
  if (factors == 0) throw InvalidArgument("factor generator needs at least one factor");
  return factors;
}

}  // namespace

std::vector<double> normalize_factors(const synth::FactorVector& f, const synth::FactorSpec& spec) {
  if (f.size() != spec.factor_count())
    throw InvalidArgument("normalize_factors: expected " + std::to_string(spec.factor_count()) + " factors, got " +
                          std::to_string(f.size()));
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto& grid = spec.grids[i];
    std::size_t idx = grid.size();
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (grid[k] == f[i]) idx = k;
    if (idx == grid.size())
      throw InvalidArgument("normalize_factors: value " + std::to_string(f[i]) + " is not on the grid of " +
                            spec.names[i]);
    if (grid.size() == 1) {
      out[i] = 0.0;
    } else if (index_coded(spec.names[i])) {
      out[i] = -1.0 + 2.0 * static_cast<double>(idx) / static_cast<double>(grid.size() - 1);
    } else {
      const double lo = grid.front(), hi = grid.back();
      out[i] = -1.0 + 2.0 * (static_cast<double>(f[i]) - lo) / (hi - lo);
    }
  }
  return out;
}

template <typename T>
FactorChannels<T>::FactorChannels(std::size_t factors)
    : gain("gen.gain", nn::BasicTensor<T>(nn::Shape{factors}, static_cast<T>(kInitialGain))),
      log_noise("gen.log_noise", nn::BasicTensor<T>(nn::Shape{factors}, T{0})) {}

template <typename T>
void FactorChannels<T>::project() {
  for (auto& v : log_noise.value.storage())
    v = std::clamp(v, static_cast<T>(vae::kLogSigmaMin), static_cast<T>(kMaxLogNoise));
}

template <typename T>
FactorEncoding<T> channel_forward(nn::Var<T> fnorm, FactorChannels<T>& channels, const nn::BasicTensor<T>& eps) {
  const auto& fv = fnorm.value();
  if (fv.rank() != 2 || fv.dim(1) != channels.size())
    throw ShapeError("channel_forward: incompatible shapes " + nn::shape_string(fv.shape()) + " and " +
                     nn::shape_string(channels.gain.value.shape()));
  if (eps.shape() != fv.shape())
    throw ShapeError("channel_forward: incompatible shapes " + nn::shape_string(fv.shape()) + " and " +
                     nn::shape_string(eps.shape()));
  auto& g = *fnorm.graph;
  const auto gain = g.parameter(channels.gain);
  const auto log_t = nn::clamp(g.parameter(channels.log_noise), static_cast<T>(vae::kLogSigmaMin),
                               static_cast<T>(kMaxLogNoise));
  const auto mu = nn::mul_rowvec(fnorm, gain);
  const auto log_t_rows = nn::broadcast_rows(log_t, fv.dim(0));
  const auto z = nn::add(mu, nn::mul(nn::exp(log_t_rows), g.constant(eps)));
  return {mu, log_t_rows, z};
}

template <typename T>
nn::Var<T> per_factor_kl(const FactorEncoding<T>& enc) {
  return objectives::gaussian_kl(enc.mu, enc.log_noise);
}

std::vector<double> per_factor_kl(std::span<const double> gain, std::span<const double> log_noise,
                                  const std::vector<std::vector<double>>& fnorm_batch) {
  if (gain.size() != log_noise.size()) throw ShapeError("per_factor_kl: gain and noise lengths differ");
  if (fnorm_batch.empty()) throw InvalidArgument("per_factor_kl: empty batch");
  std::vector<double> kl(gain.size(), 0.0);
  for (const auto& row : fnorm_batch) {
    if (row.size() != gain.size()) throw ShapeError("per_factor_kl: factor vector length mismatch");
    for (std::size_t i = 0; i < row.size(); ++i) {
      const double m = gain[i] * row[i];
      const double lt = std::clamp(log_noise[i], vae::kLogSigmaMin, kMaxLogNoise);
      kl[i] += 0.5 * (m * m + std::exp(2.0 * lt) - 1.0 - 2.0 * lt);
    }
  }
  for (auto& v : kl) {
    v /= static_cast<double>(fnorm_batch.size());
    if (!std::isfinite(v)) throw NumericError("per_factor_kl: non-finite value");
  }
  return kl;
}

objectives::LossBreakdown generator_train_objective(double loglik, std::span<const double> kl, double gamma,
                                                    double capacity) {
  return objectives::capacity_loss(loglik, kl, gamma, capacity);
}

template <typename T>
FactorGenerator<T>::FactorGenerator(std::size_t factors, const vae::ModelConfig& decoder_cfg, std::uint64_t seed)
    : cfg_(decoder_cfg), channels_(require_factors(factors)) {
  cfg_.validate();
  CounterRng rng(seed ^ 0x9e11e7a7ULL);
  decoder_ = std::make_unique<vae::Decoder<T>>(cfg_, factors, rng);
}

template <typename T>
std::vector<nn::Parameter<T>*> FactorGenerator<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  channels_.collect(out);
  decoder_->collect(out);
  return out;
}

template struct FactorChannels<float>;
template struct FactorChannels<double>;
template FactorEncoding<float> channel_forward(nn::Var<float>, FactorChannels<float>&, const nn::BasicTensor<float>&);
template FactorEncoding<double> channel_forward(nn::Var<double>, FactorChannels<double>&,
                                                const nn::BasicTensor<double>&);
template nn::Var<float> per_factor_kl(const FactorEncoding<float>&);
template nn::Var<double> per_factor_kl(const FactorEncoding<double>&);
template class FactorGenerator<float>;
template class FactorGenerator<double>;

}  // namespace capvae::generator
