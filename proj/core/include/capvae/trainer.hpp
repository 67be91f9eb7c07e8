#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "capvae/adam.hpp"
#include "capvae/capacity_schedule.hpp"
#include "capvae/factor_generator.hpp"
#include "capvae/objectives.hpp"
#include "capvae/rng.hpp"
#include "capvae/synthdata.hpp"
#include "capvae/vae_model.hpp"

namespace capvae::train {

enum class Experiment { vae, generator };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);

struct TrainConfig {
  Experiment experiment = Experiment::vae;
  std::filesystem::path dataset;
  vae::ModelConfig model;
  objectives::ObjectiveConfig objective;
  // When set, overrides objective.capacity at every step (capacity mode only).
  std::optional<CapacitySchedule> schedule;
  std::size_t batch_size = 64;
  std::uint64_t iterations = 30000;
  std::uint64_t seed = 0;
  std::uint64_t log_interval = 100;
  std::uint64_t checkpoint_interval = 10000;
  std::filesystem::path out_dir = "run";
  double learning_rate = 5e-4;
  // Decay of the moving averages logged by generator runs.
  double ema_decay = 0.99;
  // Off: the seconds column is written as 0 so metrics files are byte-stable.
  bool record_wall_clock = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Missing fields keep their defaults; unknown fields are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_config(const std::filesystem::path& path);

struct MetricsRecord {
  std::uint64_t iteration = 0;  // 0-based index of the step
  double loss = 0.0;
  double loglik = 0.0;  // nats / sample
  double kl_total = 0.0;
  std::vector<double> kl;  // per latent (VAE) or per factor (generator)
  double capacity = 0.0;   // C used for this step (0 outside capacity mode)
  double seconds = 0.0;
};

// Header `iter,loss,loglik,kl_total,C,kl_0,...,kl_{n-1},seconds`.
std::string metrics_csv_header(std::size_t n_latents);
std::string metrics_csv_row(const MetricsRecord& m);
// Header `step,C,total_kl,kl_<factor>...,recon_loglik`.
std::string generator_csv_header(const std::vector<std::string>& factor_names);

class Trainer {
 public:
  // Reads the dataset named in the config. Raises before any compute on an
  // unreadable dataset or an invalid config.
  explicit Trainer(TrainConfig cfg);
  Trainer(TrainConfig cfg, std::shared_ptr<const synth::Dataset> dataset);
  ~Trainer();

  const TrainConfig& config() const { return cfg_; }
  const synth::Dataset& dataset() const { return *dataset_; }
  std::uint64_t iteration() const { return iteration_; }

  // One forward/backward/Adam step on a batch drawn with replacement.
  MetricsRecord train_step();

  void save_checkpoint(const std::filesystem::path& path) const;
  // Restores parameters, optimizer moments, RNG state, iteration and averages.
  void load_checkpoint(const std::filesystem::path& path);

  using Observer = std::function<void(const MetricsRecord&)>;
  // Steps until config().iterations, writing metrics every log_interval and
  // checkpoints every checkpoint_interval plus final.capk in out_dir.
  // on_log sees the record that was written (averaged for generator runs).
  void run(const Observer& on_step = {}, const Observer& on_log = {});

  vae::VaeModel<float>* vae_model() { return vae_.get(); }
  generator::FactorGenerator<float>* generator_model() { return generator_.get(); }
  std::vector<nn::Parameter<float>*> parameters();
  const nn::AdamState<float>& optimizer() const { return adam_; }

  double current_capacity() const;

 private:
  void init();
  MetricsRecord vae_step(const std::vector<std::size_t>& batch, double capacity);
  MetricsRecord generator_step(const std::vector<std::size_t>& batch, double capacity);
  void update_ema(const MetricsRecord& m);

  TrainConfig cfg_;
  std::shared_ptr<const synth::Dataset> dataset_;
  std::unique_ptr<vae::VaeModel<float>> vae_;
  std::unique_ptr<generator::FactorGenerator<float>> generator_;
  std::vector<std::vector<float>> normalized_factors_;
  nn::AdamState<float> adam_;
  CounterRng rng_;
  std::uint64_t iteration_ = 0;

  bool ema_ready_ = false;
  double ema_loglik_ = 0.0;
  std::vector<double> ema_kl_;
};

// Convenience: build a Trainer from the config and run it to completion.
void run(const TrainConfig& cfg, const Trainer::Observer& on_log = {});

// Reads a model sidecar plus checkpoint from a run directory.
struct LoadedVae {
  std::unique_ptr<vae::VaeModel<float>> model;
  TrainConfig config;
};
LoadedVae load_vae(const std::filesystem::path& checkpoint, const std::filesystem::path& model_json);

}  // namespace capvae::train
