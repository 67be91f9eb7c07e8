#include "capvae/vae_model.hpp"

#include <nlohmann/json.hpp>

#include "capvae/error.hpp"
#include "capvae/ops.hpp"

namespace capvae::vae {

std::string to_string(Architecture a) { return a == Architecture::conv ? "conv" : "dense"; }

Architecture architecture_from_string(const std::string& s) {
  if (s == "conv") return Architecture::conv;
  if (s == "dense") return Architecture::dense;
  throw InvalidArgument("unknown architecture: " + s);
}

ModelConfig ModelConfig::dense_blob(std::size_t resolution) {
  ModelConfig c;
  c.architecture = Architecture::dense;
  c.height = c.width = resolution;
  return c;
}

void ModelConfig::validate() const {
  if (n_latents == 0) throw InvalidArgument("n_latents must be >= 1");
  if (channels == 0 || height == 0 || width == 0) throw InvalidArgument("input dimensions must be positive");
  for (auto h : hidden)
    if (h == 0) throw InvalidArgument("hidden widths must be positive");
  if (architecture == Architecture::conv) {
    if (conv_layers == 0 || conv_channels == 0 || kernel == 0)
      throw InvalidArgument("conv architecture needs positive conv_layers, conv_channels and kernel");
    const std::size_t factor = std::size_t{1} << conv_layers;
    if (height % factor != 0 || width % factor != 0)
      throw InvalidArgument("conv architecture with " + std::to_string(conv_layers) +
                            " stride-2 layers needs input dims divisible by " + std::to_string(factor));
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"architecture", to_string(c.architecture)},
                     {"n_latents", c.n_latents},
                     {"channels", c.channels},
                     {"height", c.height},
                     {"width", c.width},
                     {"hidden", c.hidden},
                     {"conv_channels", c.conv_channels},
                     {"conv_layers", c.conv_layers},
                     {"kernel", c.kernel}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const char* known[] = {"architecture", "n_latents",     "channels",    "height", "width",
                                "hidden",       "conv_channels", "conv_layers", "kernel"};
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw InvalidArgument("unknown model config field: " + key);
  }
  if (j.contains("architecture")) c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
  if (j.contains("n_latents")) j.at("n_latents").get_to(c.n_latents);
  if (j.contains("channels")) j.at("channels").get_to(c.channels);
  if (j.contains("height")) j.at("height").get_to(c.height);
  if (j.contains("width")) j.at("width").get_to(c.width);
  if (j.contains("hidden")) j.at("hidden").get_to(c.hidden);
  if (j.contains("conv_channels")) j.at("conv_channels").get_to(c.conv_channels);
  if (j.contains("conv_layers")) j.at("conv_layers").get_to(c.conv_layers);
  if (j.contains("kernel")) j.at("kernel").get_to(c.kernel);
}

template <typename T>
LatentSample<T> reparameterize(const GaussianPosterior<T>& post, nn::BasicTensor<T> eps) {
  if (eps.shape() != post.mu.shape() || post.log_sigma.shape() != post.mu.shape())
    throw ShapeError("reparameterize: incompatible shapes " + nn::shape_string(post.mu.shape()) + " and " +
                     nn::shape_string(eps.shape()));
  auto& g = *post.mu.graph;
  const auto noise = g.constant(eps);
  auto z = nn::add(post.mu, nn::mul(nn::exp(post.log_sigma), noise));
  return {z, std::move(eps)};
}

template <typename T>
Decoder<T>::Decoder(const ModelConfig& cfg, std::size_t input_dim, CounterRng& rng, const std::string& prefix)
    : cfg_(cfg), input_dim_(input_dim) {
  cfg_.validate();
  if (input_dim == 0) throw InvalidArgument("decoder input dimension must be positive");
  std::size_t width = input_dim;
  std::size_t layer = 0;
  for (auto it = cfg_.hidden.rbegin(); it != cfg_.hidden.rend(); ++it) {
    dense_.emplace_back(prefix + ".fc" + std::to_string(layer++), width, *it, rng);
    width = *it;
  }
  if (cfg_.architecture == Architecture::dense) {
    dense_.emplace_back(prefix + ".out", width, cfg_.input_size(), rng);
  } else {
    const std::size_t factor = std::size_t{1} << cfg_.conv_layers;
    const std::size_t spatial = (cfg_.height / factor) * (cfg_.width / factor);
    dense_.emplace_back(prefix + ".fc" + std::to_string(layer), width, cfg_.conv_channels * spatial, rng);
    for (std::size_t i = 0; i < cfg_.conv_layers; ++i) {
      const bool last = i + 1 == cfg_.conv_layers;
      deconv_.emplace_back(prefix + ".deconv" + std::to_string(i), cfg_.conv_channels,
                           last ? cfg_.channels : cfg_.conv_channels, cfg_.kernel, 2, rng);
    }
  }
}

template <typename T>
nn::Var<T> Decoder<T>::operator()(nn::Var<T> z) {
  if (z.value().rank() != 2 || z.shape()[1] != input_dim_)
    throw ShapeError("decode: expected [batch, " + std::to_string(input_dim_) + "], got " +
                     nn::shape_string(z.shape()));
  const std::size_t batch = z.shape()[0];
  auto h = z;
  if (cfg_.architecture == Architecture::dense) {
    for (std::size_t i = 0; i + 1 < dense_.size(); ++i) h = nn::relu(dense_[i](h));
    h = dense_.back()(h);
    return nn::reshape(h, nn::Shape{batch, cfg_.channels, cfg_.height, cfg_.width});
  }
  for (auto& layer : dense_) h = nn::relu(layer(h));
  const std::size_t factor = std::size_t{1} << cfg_.conv_layers;
  h = nn::reshape(h, nn::Shape{batch, cfg_.conv_channels, cfg_.height / factor, cfg_.width / factor});
  for (std::size_t i = 0; i < deconv_.size(); ++i) {
    h = deconv_[i](h);
    if (i + 1 < deconv_.size()) h = nn::relu(h);
  }
  return h;
}

template <typename T>
void Decoder<T>::collect(std::vector<nn::Parameter<T>*>& out) {
  for (auto& l : dense_) l.collect(out);
  for (auto& l : deconv_) l.collect(out);
}

template <typename T>
Encoder<T>::Encoder(const ModelConfig& cfg, CounterRng& rng, const std::string& prefix) : cfg_(cfg) {
  cfg_.validate();
  std::size_t width = cfg_.input_size();
  if (cfg_.architecture == Architecture::conv) {
    std::size_t in = cfg_.channels;
    for (std::size_t i = 0; i < cfg_.conv_layers; ++i) {
      conv_.emplace_back(prefix + ".conv" + std::to_string(i), in, cfg_.conv_channels, cfg_.kernel, 2, rng);
      in = cfg_.conv_channels;
    }
    const std::size_t factor = std::size_t{1} << cfg_.conv_layers;
    width = cfg_.conv_channels * (cfg_.height / factor) * (cfg_.width / factor);
  }
  std::size_t layer = 0;
  for (auto h : cfg_.hidden) {
    dense_.emplace_back(prefix + ".fc" + std::to_string(layer++), width, h, rng);
    width = h;
  }
  dense_.emplace_back(prefix + ".latent", width, 2 * cfg_.n_latents, rng);
}

template <typename T>
nn::Var<T> Encoder<T>::operator()(nn::Var<T> x) {
  auto h = x;
  for (auto& layer : conv_) h = nn::relu(layer(h));
  h = nn::flatten(h);
  for (std::size_t i = 0; i + 1 < dense_.size(); ++i) h = nn::relu(dense_[i](h));
  return dense_.back()(h);
}

template <typename T>
void Encoder<T>::collect(std::vector<nn::Parameter<T>*>& out) {
  for (auto& l : conv_) l.collect(out);
  for (auto& l : dense_) l.collect(out);
}

template <typename T>
VaeModel<T>::VaeModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  CounterRng rng(seed ^ 0x5eed1417ULL);
  encoder_ = std::make_unique<Encoder<T>>(cfg_, rng);
  decoder_ = std::make_unique<Decoder<T>>(cfg_, cfg_.n_latents, rng);
}

template <typename T>
void VaeModel<T>::check_input(const nn::BasicTensor<T>& x) const {
  const nn::Shape expected{x.rank() > 0 ? x.dim(0) : 0, cfg_.channels, cfg_.height, cfg_.width};
  if (x.shape() != expected)
    throw ShapeError("encode: input shape " + nn::shape_string(x.shape()) + " does not match model input " +
                     nn::shape_string(expected));
}

template <typename T>
GaussianPosterior<T> VaeModel<T>::encode(nn::Var<T> x) {
  check_input(x.value());
  const auto stats = (*encoder_)(x);
  const std::size_t n = cfg_.n_latents;
  return {nn::slice_cols(stats, 0, n),
          nn::clamp(nn::slice_cols(stats, n, 2 * n), static_cast<T>(kLogSigmaMin), static_cast<T>(kLogSigmaMax))};
}

template <typename T>
nn::Var<T> VaeModel<T>::decode(nn::Var<T> z) {
  return (*decoder_)(z);
}

template <typename T>
std::vector<nn::Parameter<T>*> VaeModel<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  encoder_->collect(out);
  decoder_->collect(out);
  return out;
}

template <typename T>
typename VaeModel<T>::PosteriorValues VaeModel<T>::infer(const nn::BasicTensor<T>& x) {
  nn::Graph<T> g;
  const auto post = encode(g.constant(x));
  return {post.mu.value(), post.log_sigma.value()};
}

template <typename T>
nn::BasicTensor<T> VaeModel<T>::decode_logits(const nn::BasicTensor<T>& z) {
  nn::Graph<T> g;
  return decode(g.constant(z)).value();
}

template LatentSample<float> reparameterize(const GaussianPosterior<float>&, nn::BasicTensor<float>);
template LatentSample<double> reparameterize(const GaussianPosterior<double>&, nn::BasicTensor<double>);
template class Decoder<float>;
template class Decoder<double>;
template class Encoder<float>;
template class Encoder<double>;
template class VaeModel<float>;
template class VaeModel<double>;

}  // namespace capvae::vae
