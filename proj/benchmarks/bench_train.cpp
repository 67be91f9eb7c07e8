#include <benchmark/benchmark.h>

#include <filesystem>
#include <memory>

#include "capvae/synthdata.hpp"
#include "capvae/trainer.hpp"

namespace {

using namespace capvae;

std::filesystem::path scratch(const char* name) {
  return std::filesystem::temp_directory_path() / "capvae_bench" / name;
}

void BM_VaeTrainStep(benchmark::State& state) {
  const bool conv = state.range(0) != 0;
  auto data = std::make_shared<const synth::Dataset>(
      synth::enumerate_dataset(synth::blob_spec(32), synth::Renderer::blob, 32));
  train::TrainConfig cfg;
  cfg.model = conv ? vae::ModelConfig{} : vae::ModelConfig::dense_blob(32);
  cfg.objective.mode = objectives::Mode::capacity;
  cfg.schedule = CapacitySchedule{0.0, 10.0, 20000};
  cfg.out_dir = scratch(conv ? "vae_conv" : "vae_dense");
  train::Trainer trainer(cfg, data);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step().loss);
}
BENCHMARK(BM_VaeTrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GeneratorTrainStep(benchmark::State& state) {
  auto data = std::make_shared<const synth::Dataset>(
      synth::enumerate_dataset(synth::sprite_spec(3, 4, 8, 12, 12), synth::Renderer::sprite, 32));
  train::TrainConfig cfg;
  cfg.experiment = train::Experiment::generator;
  cfg.out_dir = scratch("generator");
  train::Trainer trainer(cfg, data);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step().loss);
}
BENCHMARK(BM_GeneratorTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
