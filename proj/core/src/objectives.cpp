#include "capvae/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "capvae/error.hpp"
#include "capvae/ops.hpp"

namespace capvae::objectives {

namespace {

// -t*softplus(-l) - (1-t)*softplus(l) for one pixel, sharing exp(-|l|) between
// both softplus terms and sigmoid(l).
template <typename T>
struct PixelTerms {
  T loglik;
  T sigmoid;
};

template <typename T>
PixelTerms<T> pixel_terms(T l, T t) {
  const T e = std::exp(-std::abs(l));
  const T lp = std::log1p(e);
  const T sp_pos = std::max(l, T{0}) + lp;   // softplus(l)
  const T sp_neg = std::max(-l, T{0}) + lp;  // softplus(-l)
  const T sig = l >= T{0} ? T{1} / (T{1} + e) : e / (T{1} + e);
  return {-t * sp_neg - (T{1} - t) * sp_pos, sig};
}

template <typename T>
void check_bernoulli_operands(const nn::BasicTensor<T>& logits, const nn::BasicTensor<T>& target) {
  if (logits.shape() != target.shape())
    throw ShapeError("bernoulli_loglik: incompatible shapes " + nn::shape_string(logits.shape()) + " and " +
                     nn::shape_string(target.shape()));
  for (auto t : target.values())
    if (!(t >= T{0} && t <= T{1})) throw InvalidArgument("bernoulli_loglik: target pixels must lie in [0,1]");
}

double sum_of(std::span<const double> kl) {
  double s = 0.0;
  for (auto v : kl) s += v;
  return s;
}

LossBreakdown make_breakdown(double total, double loglik, std::span<const double> kl) {
  LossBreakdown b;
  b.total = total;
  b.loglik = loglik;
  b.kl_total = sum_of(kl);
  b.kl_per_latent.assign(kl.begin(), kl.end());
  if (!std::isfinite(total) || !std::isfinite(loglik) || !std::isfinite(b.kl_total))
    throw NumericError("objective: non-finite loss component");
  return b;
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::elbo: return "elbo";
    case Mode::beta: return "beta";
    case Mode::capacity: return "capacity";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& s) {
  if (s == "elbo") return Mode::elbo;
  if (s == "beta") return Mode::beta;
  if (s == "capacity") return Mode::capacity;
  throw InvalidArgument("unknown objective mode: " + s);
}

void ObjectiveConfig::validate() const {
  if (mode == Mode::elbo && beta != 1.0) throw InvalidArgument("elbo mode requires beta = 1");
  if (mode == Mode::beta && !(beta > 0.0)) throw InvalidArgument("beta must be positive");
  if (mode == Mode::capacity) {
    if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");
    if (!(capacity >= 0.0)) throw InvalidArgument("capacity C must be non-negative");
  }
}

template <typename T>
std::vector<double> gaussian_kl(const nn::BasicTensor<T>& mu, const nn::BasicTensor<T>& log_sigma) {
  if (mu.shape() != log_sigma.shape() || mu.rank() != 2)
    throw ShapeError("gaussian_kl: incompatible shapes " + nn::shape_string(mu.shape()) + " and " +
                     nn::shape_string(log_sigma.shape()));
  const std::size_t rows = mu.dim(0), cols = mu.dim(1);
  std::vector<double> kl(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) {
      const double m = mu[r * cols + j], ls = log_sigma[r * cols + j];
      kl[j] += 0.5 * (m * m + std::exp(2.0 * ls) - 1.0 - 2.0 * ls);
    }
  for (auto& v : kl) {
    v /= static_cast<double>(rows);
    if (!std::isfinite(v)) throw NumericError("gaussian_kl: non-finite posterior");
  }
  return kl;
}

template <typename T>
nn::Var<T> gaussian_kl(nn::Var<T> mu, nn::Var<T> log_sigma) {
  if (mu.shape() != log_sigma.shape() || mu.value().rank() != 2)
    throw ShapeError("gaussian_kl: incompatible shapes " + nn::shape_string(mu.shape()) + " and " +
                     nn::shape_string(log_sigma.shape()));
  const auto two_ls = nn::scale(log_sigma, T{2});
  const auto per_element =
      nn::scale(nn::add(nn::square(mu), nn::sub(nn::exp(two_ls), nn::add_scalar(two_ls, T{1}))), T{0.5});
  return nn::mean_rows(per_element);
}

template <typename T>
double bernoulli_loglik(const nn::BasicTensor<T>& logits, const nn::BasicTensor<T>& target) {
  check_bernoulli_operands(logits, target);
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) acc += pixel_terms(logits[i], target[i]).loglik;
  return acc / static_cast<double>(logits.dim(0));
}

template <typename T>
nn::Var<T> bernoulli_loglik(nn::Var<T> logits, const nn::BasicTensor<T>& target) {
  const auto& lv = logits.value();
  check_bernoulli_operands(lv, target);
  const std::size_t batch = lv.dim(0);
  // dL/dl = (t - sigmoid(l)) / batch, kept as one residual per pixel.
  auto residual = std::make_shared<std::vector<T>>(lv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const auto p = pixel_terms(lv[i], target[i]);
    acc += p.loglik;
    (*residual)[i] = target[i] - p.sigmoid;
  }
  const double value = acc / static_cast<double>(batch);
  return logits.graph->record(
      "bernoulli_loglik", nn::BasicTensor<T>::scalar(static_cast<T>(value)), {logits},
      [residual, batch](nn::Graph<T>& g, std::size_t self) {
        const T gy = static_cast<T>(g.grad(self)[0] / static_cast<double>(batch));
        auto& gl = g.grad(g.input(self, 0));
        for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += gy * (*residual)[i];
      });
}

LossBreakdown elbo_loss(double loglik, std::span<const double> kl) {
  return make_breakdown(-loglik + sum_of(kl), loglik, kl);
}

LossBreakdown beta_loss(double loglik, std::span<const double> kl, double beta) {
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  return make_breakdown(-loglik + beta * sum_of(kl), loglik, kl);
}

LossBreakdown capacity_loss(double loglik, std::span<const double> kl, double gamma, double capacity) {
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  if (!(capacity >= 0.0)) throw InvalidArgument("capacity C must be non-negative");
  return make_breakdown(-loglik + gamma * std::abs(sum_of(kl) - capacity), loglik, kl);
}

LossBreakdown evaluate(const ObjectiveConfig& cfg, double loglik, std::span<const double> kl) {
  switch (cfg.mode) {
    case Mode::elbo: return elbo_loss(loglik, kl);
    case Mode::beta: return beta_loss(loglik, kl, cfg.beta);
    case Mode::capacity: return capacity_loss(loglik, kl, cfg.gamma, cfg.capacity);
  }
  throw InvalidArgument("unknown objective mode");
}

template <typename T>
nn::Var<T> objective(nn::Var<T> loglik, nn::Var<T> kl, const ObjectiveConfig& cfg) {
  cfg.validate();
  if (loglik.value().size() != 1) throw ShapeError("objective: loglik must be scalar");
  if (kl.value().rank() != 1) throw ShapeError("objective: kl must be a vector");
  std::vector<double> klv(kl.value().values().begin(), kl.value().values().end());
  const auto b = evaluate(cfg, static_cast<double>(loglik.value()[0]), klv);

  double kl_weight = 1.0;
  if (cfg.mode == Mode::beta) kl_weight = cfg.beta;
  if (cfg.mode == Mode::capacity) {
    const double dev = b.kl_total - cfg.capacity;
    kl_weight = dev > 0.0 ? cfg.gamma : (dev < 0.0 ? -cfg.gamma : 0.0);
  }
  return loglik.graph->record("objective", nn::BasicTensor<T>::scalar(static_cast<T>(b.total)), {loglik, kl},
                              [kl_weight](nn::Graph<T>& g, std::size_t self) {
                                const double gy = g.grad(self)[0];
                                const std::size_t li = g.input(self, 0), ki = g.input(self, 1);
                                if (g.requires_grad(li)) g.grad(li)[0] -= static_cast<T>(gy);
                                if (g.requires_grad(ki)) {
                                  auto& gk = g.grad(ki);
                                  for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += static_cast<T>(gy * kl_weight);
                                }
                              });
}

template std::vector<double> gaussian_kl(const nn::BasicTensor<float>&, const nn::BasicTensor<float>&);
template std::vector<double> gaussian_kl(const nn::BasicTensor<double>&, const nn::BasicTensor<double>&);
template nn::Var<float> gaussian_kl(nn::Var<float>, nn::Var<float>);
template nn::Var<double> gaussian_kl(nn::Var<double>, nn::Var<double>);
template double bernoulli_loglik(const nn::BasicTensor<float>&, const nn::BasicTensor<float>&);
template double bernoulli_loglik(const nn::BasicTensor<double>&, const nn::BasicTensor<double>&);
template nn::Var<float> bernoulli_loglik(nn::Var<float>, const nn::BasicTensor<float>&);
template nn::Var<double> bernoulli_loglik(nn::Var<double>, const nn::BasicTensor<double>&);
template nn::Var<float> objective(nn::Var<float>, nn::Var<float>, const ObjectiveConfig&);
template nn::Var<double> objective(nn::Var<double>, nn::Var<double>, const ObjectiveConfig&);

}  // namespace capvae::objectives
