#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "capvae/error.hpp"
#include "capvae/vae_model.hpp"
#include "test_support.hpp"

using namespace capvae;
using namespace capvae::vae;
using nn::BasicTensor;
using nn::Shape;

namespace {

BasicTensor<float> blob_batch(std::size_t n, std::size_t res) {
  BasicTensor<float> x(Shape{n, 1, res, res});
  const std::size_t plane = res * res;
  for (std::size_t b = 0; b < n; ++b) {
    const auto img = synth::render_blob((b % 8) / 7.0, (b / 8 % 8) / 7.0, synth::kBlobSigma, res);
    std::copy(img.pixels.begin(), img.pixels.end(), x.data() + b * plane);
  }
  return x;
}

}  // namespace

TEST(ModelConfig, DefaultsAndJson) {
  const ModelConfig d;
  EXPECT_EQ(d.n_latents, 10u);
  const auto blob = ModelConfig::dense_blob();
  EXPECT_EQ(blob.architecture, Architecture::dense);
  EXPECT_EQ(blob.hidden, (std::vector<std::size_t>{256, 256}));
  const nlohmann::json j = blob;
  EXPECT_EQ(j.get<ModelConfig>(), blob);
  EXPECT_THROW((nlohmann::json{{"latents", 3}}.get<ModelConfig>()), InvalidArgument);
  EXPECT_THROW(architecture_from_string("mlp"), InvalidArgument);
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  c.height = c.width = 24;  // not divisible by 2^4
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = ModelConfig{};
  c.n_latents = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(VaeModel, PosteriorShapesAndClamp) {
  VaeModel<float> model(ModelConfig::dense_blob(), 1);
  const auto post = model.infer(blob_batch(64, 32));
  EXPECT_EQ(post.mu.shape(), (Shape{64, 10}));
  EXPECT_TRUE(post.mu.all_finite());
  for (float v : post.log_sigma.storage()) {
    EXPECT_GE(v, kLogSigmaMin);
    EXPECT_LE(v, kLogSigmaMax);
  }
}

TEST(VaeModel, ClampHoldsForExtremeInputs) {
  VaeModel<float> model(ModelConfig::dense_blob(16), 2);
  auto params = model.parameters();
  for (auto* p : params)
    for (auto& v : p->value.storage()) v *= 40.0f;
  const auto post = model.infer(BasicTensor<float>(Shape{2, 1, 16, 16}, 1.0f));
  for (float v : post.log_sigma.storage()) {
    EXPECT_GE(v, kLogSigmaMin);
    EXPECT_LE(v, kLogSigmaMax);
  }
}

TEST(VaeModel, IdenticalInputsGiveIdenticalRows) {
  ModelConfig cfg;
  cfg.height = cfg.width = 16;
  cfg.conv_layers = 3;
  VaeModel<float> model(cfg, 3);
  auto x = blob_batch(2, 16);
  std::copy(x.data(), x.data() + 256, x.data() + 256);
  const auto post = model.infer(x);
  for (std::size_t j = 0; j < 10; ++j) {
    EXPECT_EQ(post.mu[j], post.mu[10 + j]);
    EXPECT_EQ(post.log_sigma[j], post.log_sigma[10 + j]);
  }
}

TEST(VaeModel, SameSeedSameParameters) {
  VaeModel<float> a(ModelConfig::dense_blob(16), 9), b(ModelConfig::dense_blob(16), 9), c(ModelConfig::dense_blob(16), 10);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  EXPECT_NE(pa[0]->value, pc[0]->value);
}

TEST(VaeModel, DecoderOutputShape) {
  VaeModel<float> conv(ModelConfig{}, 4);
  EXPECT_EQ(conv.decode_logits(BasicTensor<float>(Shape{64, 10}, 0.1f)).shape(), (Shape{64, 1, 32, 32}));
  VaeModel<float> dense(ModelConfig::dense_blob(), 4);
  EXPECT_EQ(dense.decode_logits(BasicTensor<float>(Shape{5, 10}, 0.1f)).shape(), (Shape{5, 1, 32, 32}));
}

TEST(VaeModel, DecoderIsContinuousInLatent) {
  VaeModel<float> model(ModelConfig::dense_blob(16), 5);
  BasicTensor<float> z(Shape{1, 10}, 0.3f);
  const auto base = model.decode_logits(z);
  double prev = 1e9;
  for (float delta : {1e-1f, 1e-2f, 1e-3f}) {
    auto zd = z;
    zd[4] += delta;
    const auto out = model.decode_logits(zd);
    double norm = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) norm += std::pow(out[i] - base[i], 2);
    norm = std::sqrt(norm);
    EXPECT_LT(norm, prev);
    prev = norm;
  }
  EXPECT_LT(prev, 1e-2);
}

TEST(VaeModel, ShapeErrors) {
  VaeModel<float> model(ModelConfig::dense_blob(16), 6);
  EXPECT_THROW(model.infer(BasicTensor<float>(Shape{2, 1, 32, 32})), ShapeError);
  EXPECT_THROW(model.decode_logits(BasicTensor<float>(Shape{2, 9})), ShapeError);
}

TEST(Reparameterize, Examples) {
  nn::Graph<double> g;
  GaussianPosterior<double> post{g.constant(BasicTensor<double>(Shape{1, 1}, 2.0)),
                                 g.constant(BasicTensor<double>(Shape{1, 1}, std::log(0.5)))};
  EXPECT_NEAR(reparameterize(post, BasicTensor<double>(Shape{1, 1}, 1.0)).z.value()[0], 2.5, 1e-12);
  EXPECT_EQ(reparameterize(post, BasicTensor<double>(Shape{1, 1}, 0.0)).z.value()[0], 2.0);
  EXPECT_THROW(reparameterize(post, BasicTensor<double>(Shape{1, 2}, 0.0)), ShapeError);
}

TEST(Reparameterize, GradientReachesMuAndLogSigma) {
  nn::Parameter<double> mu("mu", BasicTensor<double>(Shape{1, 2}, std::vector<double>{0.5, -1.0}));
  nn::Parameter<double> ls("ls", BasicTensor<double>(Shape{1, 2}, std::vector<double>{0.0, std::log(2.0)}));
  nn::Graph<double> g;
  const auto s = reparameterize(GaussianPosterior<double>{g.parameter(mu), g.parameter(ls)},
                                BasicTensor<double>(Shape{1, 2}, std::vector<double>{3.0, -0.5}));
  g.backward(nn::sum(s.z));
  EXPECT_DOUBLE_EQ(mu.grad[0], 1.0);
  EXPECT_DOUBLE_EQ(ls.grad[0], 3.0);
  EXPECT_DOUBLE_EQ(ls.grad[1], -0.5 * 2.0);
}

TEST(VaeModelGradient, DenseTinyModelMatchesFiniteDifferences) {
  const objectives::ObjectiveConfig cfg{objectives::Mode::beta, 4.0, 1000.0, 0.0};
  const auto r = capvae::testing::tiny_model_gradcheck(Architecture::dense, cfg);
  EXPECT_GE(r.checked, 32u);
  EXPECT_LT(r.worst_rel, 1e-4);
}

TEST(VaeModelGradient, ConvTinyModelMatchesFiniteDifferences) {
  const objectives::ObjectiveConfig cfg{objectives::Mode::capacity, 1.0, 10.0, 0.5};
  const auto r = capvae::testing::tiny_model_gradcheck(Architecture::conv, cfg);
  EXPECT_GE(r.checked, 32u);
  EXPECT_LT(r.worst_rel, 1e-4);
}
