#include <gtest/gtest.h>

#include <cmath>

#include "capvae/error.hpp"
#include "capvae/objectives.hpp"
#include "capvae/ops.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace capvae;
using namespace capvae::objectives;
using nn::BasicTensor;
using nn::Shape;

namespace {

using capvae::testing::naive_loglik;
using capvae::testing::quadrature_kl;

double single_kl(double mu, double log_sigma) {
  return gaussian_kl(BasicTensor<double>(Shape{1, 1}, mu), BasicTensor<double>(Shape{1, 1}, log_sigma))[0];
}

double single_loglik(double l, double t) {
  return bernoulli_loglik(BasicTensor<double>(Shape{1, 1}, l), BasicTensor<double>(Shape{1, 1}, t));
}

}  // namespace

TEST(GaussianKl, Examples) {
  EXPECT_DOUBLE_EQ(single_kl(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(single_kl(1.0, 0.0), 0.5);
  EXPECT_NEAR(single_kl(0.0, -1.0), 0.5 * (std::exp(-2.0) + 1.0), 1e-12);
  EXPECT_NEAR(single_kl(0.0, -1.0), 0.5677, 1e-4);
}

TEST(GaussianKl, MatchesQuadratureOracle) {
  CounterRng rng(21);
  for (int i = 0; i < 100; ++i) {
    const double mu = rng.uniform(-3.0, 3.0);
    const double log_sigma = rng.uniform(-3.0, 1.0);
    EXPECT_NEAR(single_kl(mu, log_sigma), quadrature_kl(mu, std::exp(log_sigma)), 1e-4)
        << "mu " << mu << " log_sigma " << log_sigma;
  }
}

TEST(GaussianKl, IsBatchMeanPerLatent) {
  BasicTensor<double> mu(Shape{2, 2}, std::vector<double>{1.0, 0.0, 3.0, 0.0});
  BasicTensor<double> ls(Shape{2, 2}, 0.0);
  const auto kl = gaussian_kl(mu, ls);
  ASSERT_EQ(kl.size(), 2u);
  EXPECT_DOUBLE_EQ(kl[0], 0.5 * (0.5 + 4.5));
  EXPECT_DOUBLE_EQ(kl[1], 0.0);
}

TEST(GaussianKl, NonNegative) {
  CounterRng rng(22);
  for (int i = 0; i < 1000; ++i) EXPECT_GE(single_kl(rng.uniform(-5, 5), rng.uniform(-6, 4)), 0.0);
}

TEST(GaussianKl, Errors) {
  EXPECT_THROW(gaussian_kl(BasicTensor<double>(Shape{2, 3}), BasicTensor<double>(Shape{3, 2})), ShapeError);
  EXPECT_THROW(single_kl(std::nan(""), 0.0), NumericError);
}

TEST(BernoulliLoglik, Examples) {
  EXPECT_NEAR(single_loglik(0.0, 1.0), std::log(0.5), 1e-12);
  EXPECT_NEAR(single_loglik(20.0, 1.0), 0.0, 1e-8);
  EXPECT_NEAR(single_loglik(3.0, 0.25), naive_loglik(3.0, 0.25), 1e-12);
  EXPECT_NEAR(single_loglik(3.0, 0.25), -2.2986, 1e-4);
}

TEST(BernoulliLoglik, MatchesNaiveSigmoidForm) {
  CounterRng rng(23);
  for (int i = 0; i < 2000; ++i) {
    const double l = rng.uniform(-10.0, 10.0), t = rng.uniform();
    EXPECT_NEAR(single_loglik(l, t), naive_loglik(l, t), 1e-6) << "logit " << l << " target " << t;
  }
}

TEST(BernoulliLoglik, FloatTracksDoubleReference) {
  CounterRng rng(24);
  BasicTensor<float> lf(Shape{4, 64}), tf(Shape{4, 64});
  BasicTensor<double> ld(Shape{4, 64}), td(Shape{4, 64});
  for (std::size_t i = 0; i < lf.size(); ++i) {
    lf[i] = static_cast<float>(rng.uniform(-10, 10));
    tf[i] = static_cast<float>(rng.uniform());
    ld[i] = lf[i], td[i] = tf[i];
  }
  const double ref = bernoulli_loglik(ld, td);
  EXPECT_NEAR(bernoulli_loglik(lf, tf), ref, 1e-5 * std::abs(ref));
}

TEST(BernoulliLoglik, FiniteAtExtremeLogits) {
  for (double l : {-50.0, 50.0}) {
    for (double t : {0.0, 0.5, 1.0}) {
      EXPECT_TRUE(std::isfinite(single_loglik(l, t)));
      const auto v = bernoulli_loglik(BasicTensor<float>(Shape{1, 1}, static_cast<float>(l)),
                                      BasicTensor<float>(Shape{1, 1}, static_cast<float>(t)));
      EXPECT_TRUE(std::isfinite(v));
    }
  }
  EXPECT_NEAR(single_loglik(-50.0, 1.0), -50.0, 1e-9);
}

TEST(BernoulliLoglik, IsBatchMeanOfPerImageSum) {
  BasicTensor<double> l(Shape{2, 3}, 0.0), t(Shape{2, 3}, 1.0);
  EXPECT_NEAR(bernoulli_loglik(l, t), 3.0 * std::log(0.5), 1e-12);
}

TEST(BernoulliLoglik, Errors) {
  EXPECT_THROW(single_loglik(0.0, 1.5), InvalidArgument);
  EXPECT_THROW(bernoulli_loglik(BasicTensor<double>(Shape{2, 2}), BasicTensor<double>(Shape{4})), ShapeError);
}

TEST(BernoulliLoglik, GradientMatchesFiniteDifferences) {
  CounterRng rng(25);
  nn::Parameter<double> logits("l", capvae::testing::random_tensor({3, 5}, rng, 3.0));
  BasicTensor<double> target(Shape{3, 5});
  for (auto& v : target.storage()) v = rng.uniform();
  const auto r = capvae::testing::check_gradients(
      [&](nn::Graph<double>& g) { return bernoulli_loglik(g.parameter(logits), target); }, {&logits}, 15);
  EXPECT_LT(r.worst_rel, 1e-6);
}

TEST(GaussianKl, GraphGradientMatchesFiniteDifferences) {
  CounterRng rng(26);
  nn::Parameter<double> mu("mu", capvae::testing::random_tensor({4, 3}, rng));
  nn::Parameter<double> ls("ls", capvae::testing::random_tensor({4, 3}, rng, 0.5));
  const auto r = capvae::testing::check_gradients(
      [&](nn::Graph<double>& g) {
        const auto kl = gaussian_kl(g.parameter(mu), g.parameter(ls));
        return nn::sum(nn::mul(kl, g.constant(BasicTensor<double>(Shape{3}, std::vector<double>{1, 2, 3}))));
      },
      {&mu, &ls}, 12);
  EXPECT_LT(r.worst_rel, 1e-6);
}

TEST(Losses, Examples) {
  const std::vector<double> ten{4.0, 6.0};
  EXPECT_DOUBLE_EQ(elbo_loss(-100.0, ten).total, 110.0);
  EXPECT_DOUBLE_EQ(elbo_loss(-100.0, std::vector<double>{0.0, 0.0}).total, 100.0);
  EXPECT_DOUBLE_EQ(beta_loss(-100.0, ten, 150.0).total, 1600.0);
  const std::vector<double> five{2.0, 3.0};
  EXPECT_DOUBLE_EQ(capacity_loss(-100.0, five, 1000.0, 3.0).total, 2100.0);
  EXPECT_DOUBLE_EQ(capacity_loss(-100.0, five, 1000.0, 5.0).total, 100.0);
  const std::vector<double> two{2.0};
  EXPECT_DOUBLE_EQ(capacity_loss(0.0, two, 1000.0, 3.0).total, 1000.0);
}

TEST(Losses, BreakdownFields) {
  const auto b = beta_loss(-42.0, std::vector<double>{1.0, 2.0}, 4.0);
  EXPECT_DOUBLE_EQ(b.loglik, -42.0);
  EXPECT_DOUBLE_EQ(b.kl_total, 3.0);
  EXPECT_EQ(b.kl_per_latent, (std::vector<double>{1.0, 2.0}));
}

TEST(Losses, BetaOneEqualsElboOnRandomBatches) {
  CounterRng rng(27);
  for (int i = 0; i < 100; ++i) {
    const double ll = -rng.uniform(0.0, 800.0);
    std::vector<double> kl(10);
    for (auto& k : kl) k = rng.uniform(0.0, 5.0);
    const double a = beta_loss(ll, kl, 1.0).total, b = elbo_loss(ll, kl).total;
    EXPECT_LE(std::abs(a - b), 1e-6 * std::abs(b));
  }
}

TEST(Losses, CapacityAtTargetIsExactlyNegLoglik) {
  CounterRng rng(28);
  for (int i = 0; i < 100; ++i) {
    const double ll = -rng.uniform(0.0, 800.0);
    std::vector<double> kl(10);
    for (auto& k : kl) k = rng.uniform(0.0, 5.0);
    double c = 0.0;
    for (double k : kl) c += k;
    EXPECT_EQ(capacity_loss(ll, kl, 1000.0, c).total, -ll);
  }
}

TEST(Losses, Errors) {
  const std::vector<double> kl{1.0};
  EXPECT_THROW(beta_loss(0.0, kl, 0.0), InvalidArgument);
  EXPECT_THROW(capacity_loss(0.0, kl, -1.0, 1.0), InvalidArgument);
  EXPECT_THROW(capacity_loss(0.0, kl, 1000.0, -1.0), InvalidArgument);
  EXPECT_THROW(elbo_loss(std::nan(""), kl), NumericError);
  EXPECT_THROW(mode_from_string("vq"), InvalidArgument);
  EXPECT_EQ(mode_from_string(to_string(Mode::capacity)), Mode::capacity);
}

namespace {

struct ObjectiveGrads {
  double total, d_loglik;
  std::vector<double> d_kl;
};

ObjectiveGrads objective_grads(double ll, std::vector<double> kl, const ObjectiveConfig& cfg) {
  nn::Parameter<double> pl("ll", BasicTensor<double>::scalar(ll));
  nn::Parameter<double> pk("kl", BasicTensor<double>(Shape{kl.size()}, kl));
  nn::Graph<double> g;
  const auto loss = objective(g.parameter(pl), g.parameter(pk), cfg);
  const double total = loss.value().item();
  g.backward(loss);
  return {total, pl.grad[0], pk.grad.storage()};
}

}  // namespace

TEST(ObjectiveNode, ForwardMatchesEvaluateAndGradientsAreAnalytic) {
  ObjectiveConfig beta{Mode::beta, 150.0, 1000.0, 0.0};
  auto r = objective_grads(-100.0, {4.0, 6.0}, beta);
  EXPECT_DOUBLE_EQ(r.total, evaluate(beta, -100.0, std::vector<double>{4.0, 6.0}).total);
  EXPECT_DOUBLE_EQ(r.d_loglik, -1.0);
  EXPECT_DOUBLE_EQ(r.d_kl[0], 150.0);

  ObjectiveConfig cap{Mode::capacity, 1.0, 1000.0, 3.0};
  r = objective_grads(-100.0, {2.0, 3.0}, cap);
  EXPECT_DOUBLE_EQ(r.total, 2100.0);
  EXPECT_DOUBLE_EQ(r.d_kl[1], 1000.0);
  r = objective_grads(-100.0, {1.0, 1.0}, cap);
  EXPECT_DOUBLE_EQ(r.d_kl[0], -1000.0);
  r = objective_grads(-100.0, {1.0, 2.0}, cap);
  EXPECT_DOUBLE_EQ(r.total, 100.0);
  EXPECT_DOUBLE_EQ(r.d_kl[0], 0.0);
  EXPECT_DOUBLE_EQ(r.d_loglik, -1.0);
}
