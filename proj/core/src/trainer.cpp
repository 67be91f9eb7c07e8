#include "capvae/trainer.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "capvae/checkpoint.hpp"
#include "capvae/error.hpp"
#include "capvae/ops.hpp"
#include "denormals.hpp"

namespace capvae::train {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Experiment e) { return e == Experiment::vae ? "vae" : "generator"; }

Experiment experiment_from_string(const std::string& s) {
  if (s == "vae") return Experiment::vae;
  if (s == "generator") return Experiment::generator;
  throw InvalidArgument("unknown experiment: " + s + " (expected vae or generator)");
}

void TrainConfig::validate() const {
  model.validate();
  objective.validate();
  if (schedule) schedule->validate();
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (log_interval == 0) throw InvalidArgument("log_interval must be positive");
  if (checkpoint_interval == 0) throw InvalidArgument("checkpoint_interval must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw InvalidArgument("ema_decay must lie in [0, 1)");
  if (dataset.empty()) throw InvalidArgument("dataset path is required");
  if (out_dir.empty()) throw InvalidArgument("out_dir is required");
  if (schedule && objective.mode != objectives::Mode::capacity && experiment == Experiment::vae)
    throw InvalidArgument("a capacity schedule requires objective mode 'capacity'");
}

namespace {

void to_json_objective(json& j, const objectives::ObjectiveConfig& o) {
  j = json{{"mode", objectives::to_string(o.mode)}, {"beta", o.beta}, {"gamma", o.gamma}, {"capacity", o.capacity}};
}

void from_json_objective(const json& j, objectives::ObjectiveConfig& o) {
  for (const auto& [key, _] : j.items())
    if (key != "mode" && key != "beta" && key != "gamma" && key != "capacity")
      throw InvalidArgument("unknown objective field: " + key);
  if (j.contains("mode")) o.mode = objectives::mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("beta")) j.at("beta").get_to(o.beta);
  if (j.contains("gamma")) j.at("gamma").get_to(o.gamma);
  if (j.contains("capacity")) j.at("capacity").get_to(o.capacity);
}

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }
double from_bits(std::uint64_t v) { return std::bit_cast<double>(v); }

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

void to_json(json& j, const TrainConfig& c) {
  j = json{{"experiment", to_string(c.experiment)},
           {"dataset", c.dataset.string()},
           {"model", c.model},
           {"batch_size", c.batch_size},
           {"iterations", c.iterations},
           {"seed", c.seed},
           {"log_interval", c.log_interval},
           {"checkpoint_interval", c.checkpoint_interval},
           {"out_dir", c.out_dir.string()},
           {"learning_rate", c.learning_rate},
           {"ema_decay", c.ema_decay},
           {"record_wall_clock", c.record_wall_clock}};
  to_json_objective(j["objective"], c.objective);
  if (c.schedule) j["schedule"] = *c.schedule;
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw InvalidArgument("training config must be a JSON object");
  static const std::vector<std::string> known{"experiment",  "dataset",    "model",      "objective",
                                              "schedule",    "batch_size", "iterations", "seed",
                                              "log_interval", "checkpoint_interval", "out_dir",
                                              "learning_rate", "ema_decay", "record_wall_clock"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw InvalidArgument("unknown training config field: " + key);
  try {
    if (j.contains("experiment")) c.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("objective")) from_json_objective(j.at("objective"), c.objective);
    if (j.contains("schedule")) {
      if (j.at("schedule").is_null()) c.schedule.reset();
      else c.schedule = j.at("schedule").get<CapacitySchedule>();
    }
    if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
    if (j.contains("iterations")) j.at("iterations").get_to(c.iterations);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("log_interval")) j.at("log_interval").get_to(c.log_interval);
    if (j.contains("checkpoint_interval")) j.at("checkpoint_interval").get_to(c.checkpoint_interval);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
    if (j.contains("ema_decay")) j.at("ema_decay").get_to(c.ema_decay);
    if (j.contains("record_wall_clock")) j.at("record_wall_clock").get_to(c.record_wall_clock);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid training config: ") + e.what());
  }
}

TrainConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("malformed config file " + path.string() + ": " + e.what());
  }
  TrainConfig c;
  from_json(j, c);
  return c;
}

std::string metrics_csv_header(std::size_t n_latents) {
  std::string h = "iter,loss,loglik,kl_total,C";
  for (std::size_t i = 0; i < n_latents; ++i) h += ",kl_" + std::to_string(i);
  return h + ",seconds";
}

std::string metrics_csv_row(const MetricsRecord& m) {
  std::string r = std::to_string(m.iteration) + "," + format_double(m.loss) + "," + format_double(m.loglik) + "," +
                  format_double(m.kl_total) + "," + format_double(m.capacity);
  for (double k : m.kl) r += "," + format_double(k);
  return r + "," + format_double(m.seconds);
}

std::string generator_csv_header(const std::vector<std::string>& factor_names) {
  std::string h = "step,C,total_kl";
  for (const auto& n : factor_names) h += ",kl_" + n;
  return h + ",recon_loglik";
}

namespace {

std::string generator_csv_row(const MetricsRecord& m) {
  std::string r = std::to_string(m.iteration) + "," + format_double(m.capacity) + "," + format_double(m.kl_total);
  for (double k : m.kl) r += "," + format_double(k);
  return r + "," + format_double(m.loglik);
}

std::shared_ptr<const synth::Dataset> open_dataset(const fs::path& p) {
  if (p.empty()) throw InvalidArgument("dataset path is required");
  return std::make_shared<const synth::Dataset>(synth::read_dataset(p));
}

void ensure_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  const auto probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  dataset_ = open_dataset(cfg_.dataset);
  init();
}

Trainer::Trainer(TrainConfig cfg, std::shared_ptr<const synth::Dataset> dataset)
    : cfg_(std::move(cfg)), dataset_(std::move(dataset)) {
  if (!dataset_) throw InvalidArgument("dataset is required");
  if (cfg_.dataset.empty()) cfg_.dataset = "<memory>";
  cfg_.validate();
  init();
}

Trainer::~Trainer() = default;

void Trainer::init() {
  const auto& d = *dataset_;
  if (cfg_.batch_size > d.size())
    throw InvalidArgument("batch_size " + std::to_string(cfg_.batch_size) + " exceeds dataset size " +
                          std::to_string(d.size()));
  if (cfg_.model.channels != d.channels() || cfg_.model.height != d.height() || cfg_.model.width != d.width())
    throw InvalidArgument("model input " + std::to_string(cfg_.model.channels) + "x" +
                          std::to_string(cfg_.model.height) + "x" + std::to_string(cfg_.model.width) +
                          " does not match dataset images " + std::to_string(d.channels()) + "x" +
                          std::to_string(d.height()) + "x" + std::to_string(d.width()));
  ensure_writable_dir(cfg_.out_dir);

  if (cfg_.experiment == Experiment::vae) {
    vae_ = std::make_unique<vae::VaeModel<float>>(cfg_.model, cfg_.seed);
  } else {
    if (!cfg_.schedule) cfg_.schedule = CapacitySchedule{0.5, 25.0, std::max<std::uint64_t>(cfg_.iterations, 1)};
    cfg_.objective.mode = objectives::Mode::capacity;
    const auto& spec = d.spec();
    generator_ = std::make_unique<generator::FactorGenerator<float>>(spec.factor_count(), cfg_.model, cfg_.seed);
    normalized_factors_.reserve(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto f = generator::normalize_factors(d.factors(i), spec);
      normalized_factors_.emplace_back(f.begin(), f.end());
    }
  }
  nn::AdamHyper hyper;
  hyper.learning_rate = cfg_.learning_rate;
  const auto params = parameters();
  adam_ = nn::AdamState<float>(params, hyper);
  rng_ = CounterRng(cfg_.seed);
}

std::vector<nn::Parameter<float>*> Trainer::parameters() {
  return vae_ ? vae_->parameters() : generator_->parameters();
}

double Trainer::current_capacity() const {
  if (cfg_.schedule) return cfg_.schedule->at(iteration_);
  return cfg_.objective.mode == objectives::Mode::capacity ? cfg_.objective.capacity : 0.0;
}

MetricsRecord Trainer::train_step() {
  std::vector<std::size_t> batch(cfg_.batch_size);
  for (auto& b : batch) b = static_cast<std::size_t>(rng_.below(dataset_->size()));
  const double capacity = current_capacity();
  const detail::FlushDenormals ftz;
  try {
    auto m = vae_ ? vae_step(batch, capacity) : generator_step(batch, capacity);
    ++iteration_;
    return m;
  } catch (const NumericError& e) {
    throw NumericError("training diverged at iteration " + std::to_string(iteration_) + ": " + e.what());
  }
}

namespace {

nn::Tensor gather_images(const synth::Dataset& d, const std::vector<std::size_t>& batch) {
  nn::Tensor x(nn::Shape{batch.size(), d.channels(), d.height(), d.width()}, 0.0f);
  const std::size_t n = d.image_size();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto px = d.pixels(batch[b]);
    std::copy(px.begin(), px.end(), x.data() + b * n);
  }
  return x;
}

nn::Tensor normals(CounterRng& rng, std::size_t rows, std::size_t cols) {
  nn::Tensor eps(nn::Shape{rows, cols}, 0.0f);
  for (auto& v : eps.storage()) v = static_cast<float>(rng.normal());
  return eps;
}

std::vector<double> to_doubles(const nn::Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

MetricsRecord Trainer::vae_step(const std::vector<std::size_t>& batch, double capacity) {
  const auto x = gather_images(*dataset_, batch);
  const auto eps = normals(rng_, batch.size(), cfg_.model.n_latents);

  auto ocfg = cfg_.objective;
  ocfg.capacity = capacity;

  nn::Graph<float> g;
  const auto post = vae_->encode(g.constant(x));
  const auto sample = vae::reparameterize(post, eps);
  const auto logits = vae_->decode(sample.z);
  const auto ll = objectives::bernoulli_loglik(logits, x);
  const auto kl = objectives::gaussian_kl(post.mu, post.log_sigma);
  const auto total = objectives::objective(ll, kl, ocfg);
  g.backward(total);
  const auto params = parameters();
  nn::adam_step<float>(params, adam_);

  const auto kl_values = to_doubles(kl.value());
  const auto breakdown = objectives::evaluate(ocfg, ll.value().item(), kl_values);
  MetricsRecord m;
  m.iteration = iteration_;
  m.loss = breakdown.total;
  m.loglik = breakdown.loglik;
  m.kl_total = breakdown.kl_total;
  m.kl = kl_values;
  m.capacity = ocfg.mode == objectives::Mode::capacity ? capacity : 0.0;
  return m;
}

MetricsRecord Trainer::generator_step(const std::vector<std::size_t>& batch, double capacity) {
  const std::size_t f = dataset_->spec().factor_count();
  const auto x = gather_images(*dataset_, batch);
  nn::Tensor fnorm(nn::Shape{batch.size(), f}, 0.0f);
  for (std::size_t b = 0; b < batch.size(); ++b)
    std::copy(normalized_factors_[batch[b]].begin(), normalized_factors_[batch[b]].end(), fnorm.data() + b * f);
  const auto eps = normals(rng_, batch.size(), f);

  nn::Graph<float> g;
  const auto enc = generator::channel_forward(g.constant(fnorm), generator_->channels(), eps);
  const auto logits = generator_->decoder()(enc.z);
  const auto ll = objectives::bernoulli_loglik(logits, x);
  const auto kl = generator::per_factor_kl(enc);
  objectives::ObjectiveConfig ocfg{objectives::Mode::capacity, 1.0, cfg_.objective.gamma, capacity};
  const auto total = objectives::objective(ll, kl, ocfg);
  g.backward(total);
  const auto params = parameters();
  nn::adam_step<float>(params, adam_);
  generator_->channels().project();

  const auto kl_values = to_doubles(kl.value());
  const auto breakdown = generator::generator_train_objective(ll.value().item(), kl_values, ocfg.gamma, capacity);
  MetricsRecord m;
  m.iteration = iteration_;
  m.loss = breakdown.total;
  m.loglik = breakdown.loglik;
  m.kl_total = breakdown.kl_total;
  m.kl = kl_values;
  m.capacity = capacity;
  update_ema(m);
  return m;
}

void Trainer::update_ema(const MetricsRecord& m) {
  if (!ema_ready_) {
    ema_loglik_ = m.loglik;
    ema_kl_ = m.kl;
    ema_ready_ = true;
    return;
  }
  const double d = cfg_.ema_decay;
  ema_loglik_ = d * ema_loglik_ + (1.0 - d) * m.loglik;
  for (std::size_t i = 0; i < ema_kl_.size(); ++i) ema_kl_[i] = d * ema_kl_[i] + (1.0 - d) * m.kl[i];
}

void Trainer::save_checkpoint(const fs::path& path) const {
  std::map<std::string, std::uint64_t> extras{
      {"iteration", iteration_}, {"rng.key", rng_.key()}, {"rng.counter", rng_.counter()}};
  if (ema_ready_) {
    extras["ema.ready"] = 1;
    extras["ema.loglik"] = bits(ema_loglik_);
    for (std::size_t i = 0; i < ema_kl_.size(); ++i) extras["ema.kl." + std::to_string(i)] = bits(ema_kl_[i]);
  }
  auto params = const_cast<Trainer*>(this)->parameters();
  nn::write_checkpoint(path, params, &adam_, extras);
}

void Trainer::load_checkpoint(const fs::path& path) {
  const auto ckpt = nn::read_checkpoint(path);
  const auto params = parameters();
  nn::load_parameters(ckpt, params);
  if (!ckpt.adam) throw FormatError("checkpoint " + path.string() + " has no optimizer state");
  if (ckpt.adam->first_moment.size() != params.size())
    throw FormatError("checkpoint optimizer state does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (ckpt.adam->first_moment[i].shape() != params[i]->value.shape())
      throw FormatError("checkpoint optimizer state does not match parameter " + params[i]->name);
  const auto need = [&](const std::string& key) {
    const auto it = ckpt.extras.find(key);
    if (it == ckpt.extras.end()) throw FormatError("checkpoint " + path.string() + " lacks " + key);
    return it->second;
  };
  adam_ = *ckpt.adam;
  iteration_ = need("iteration");
  rng_ = CounterRng::from_state(need("rng.key"), need("rng.counter"));
  ema_ready_ = ckpt.extras.contains("ema.ready");
  if (ema_ready_) {
    ema_loglik_ = from_bits(need("ema.loglik"));
    ema_kl_.assign(dataset_->spec().factor_count(), 0.0);
    for (std::size_t i = 0; i < ema_kl_.size(); ++i) ema_kl_[i] = from_bits(need("ema.kl." + std::to_string(i)));
  }
}

namespace {

// Keeps the header and the rows logged before `iteration` so a resumed run
// rewrites the tail exactly as an uninterrupted run would.
void truncate_metrics(const fs::path& path, std::uint64_t iteration) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      keep.push_back(line);
      first = false;
      continue;
    }
    const auto comma = line.find(',');
    if (line.empty() || comma == std::string::npos) continue;
    if (std::stoull(line.substr(0, comma)) < iteration) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << "\n";
}

}  // namespace

void Trainer::run(const Observer& on_step, const Observer& on_log) {
  const fs::path metrics_path = cfg_.out_dir / "metrics.csv";
  write_json(cfg_.out_dir / "config.json", json(cfg_));
  json sidecar{{"experiment", to_string(cfg_.experiment)}, {"model", cfg_.model}};
  if (generator_) sidecar["factors"] = dataset_->spec().names;
  write_json(cfg_.out_dir / "model.json", sidecar);

  const bool fresh = iteration_ == 0 || !fs::exists(metrics_path);
  if (!fresh) truncate_metrics(metrics_path, iteration_);
  std::ofstream csv(metrics_path, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw IoError("cannot write " + metrics_path.string());
  if (fresh)
    csv << (vae_ ? metrics_csv_header(cfg_.model.n_latents) : generator_csv_header(dataset_->spec().names)) << "\n";

  const auto start = std::chrono::steady_clock::now();
  while (iteration_ < cfg_.iterations) {
    auto m = train_step();
    if (cfg_.record_wall_clock)
      m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_step) on_step(m);
    if (m.iteration % cfg_.log_interval == 0) {
      if (vae_) {
        csv << metrics_csv_row(m) << "\n";
        if (on_log) on_log(m);
      } else {
        MetricsRecord avg = m;
        avg.loglik = ema_loglik_;
        avg.kl = ema_kl_;
        avg.kl_total = std::accumulate(ema_kl_.begin(), ema_kl_.end(), 0.0);
        csv << generator_csv_row(avg) << "\n";
        if (on_log) on_log(avg);
      }
      csv.flush();
      if (!csv) throw IoError("cannot write " + metrics_path.string());
    }
    if (iteration_ % cfg_.checkpoint_interval == 0)
      save_checkpoint(cfg_.out_dir / ("ckpt_" + std::to_string(iteration_) + ".capk"));
  }
  save_checkpoint(cfg_.out_dir / "final.capk");
}

void run(const TrainConfig& cfg, const Trainer::Observer& on_log) {
  Trainer t(cfg);
  t.run({}, on_log);
}

LoadedVae load_vae(const fs::path& checkpoint, const fs::path& model_json) {
  std::ifstream in(model_json);
  if (!in) throw IoError("cannot open model description " + model_json.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("malformed model description " + model_json.string() + ": " + e.what());
  }
  if (j.value("experiment", std::string("vae")) != "vae")
    throw InvalidArgument(checkpoint.string() + " is not a VAE checkpoint");
  LoadedVae out;
  out.config.model = j.at("model").get<vae::ModelConfig>();
  out.config.experiment = Experiment::vae;
  out.model = std::make_unique<vae::VaeModel<float>>(out.config.model, 0);
  const auto ckpt = nn::read_checkpoint(checkpoint);
  const auto params = out.model->parameters();
  nn::load_parameters(ckpt, params);
  return out;
}

}  // namespace capvae::train
