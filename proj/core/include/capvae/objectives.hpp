#pragma once

#include <span>
#include <string>
#include <vector>

#include "capvae/graph.hpp"

// Training objectives in minimisation form. All quantities are nats per sample:
// KL terms are batch means per latent, the log-likelihood is a batch mean of a
// per-image sum over pixels.
namespace capvae::objectives {

enum class Mode { elbo, beta, capacity };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct ObjectiveConfig {
  Mode mode = Mode::elbo;
  double beta = 1.0;
  double gamma = 1000.0;
  double capacity = 0.0;  // C, nats

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double loglik = 0.0;
  double kl_total = 0.0;
  std::vector<double> kl_per_latent;
};

// Closed-form KL(N(mu, sigma) || N(0, 1)) per latent, averaged over the batch:
//   0.5 * (mu^2 + sigma^2 - 1 - 2 log sigma)
template <typename T>
std::vector<double> gaussian_kl(const nn::BasicTensor<T>& mu, const nn::BasicTensor<T>& log_sigma);
template <typename T>
nn::Var<T> gaussian_kl(nn::Var<T> mu, nn::Var<T> log_sigma);

// Batch mean of the per-image Bernoulli log-likelihood of `target` under
// sigmoid(logits), evaluated as -t*softplus(-l) - (1-t)*softplus(l).
template <typename T>
double bernoulli_loglik(const nn::BasicTensor<T>& logits, const nn::BasicTensor<T>& target);
template <typename T>
nn::Var<T> bernoulli_loglik(nn::Var<T> logits, const nn::BasicTensor<T>& target);

LossBreakdown elbo_loss(double loglik, std::span<const double> kl);
LossBreakdown beta_loss(double loglik, std::span<const double> kl, double beta);
// -loglik + gamma * |sum(kl) - C|
LossBreakdown capacity_loss(double loglik, std::span<const double> kl, double gamma, double capacity);
LossBreakdown evaluate(const ObjectiveConfig& cfg, double loglik, std::span<const double> kl);

// Differentiable total loss node. Forward value comes from evaluate(); the
// capacity mode uses subgradient 0 where sum(kl) == C.
template <typename T>
nn::Var<T> objective(nn::Var<T> loglik, nn::Var<T> kl, const ObjectiveConfig& cfg);

}  // namespace capvae::objectives
