#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>

#include "capvae/synthdata.hpp"
#include "capvae/trainer.hpp"

namespace capvae::acceptance {

struct RunSpec {
  std::string name;
  train::TrainConfig config;
};

// Renders the dataset once into `file` and reads it back on later calls.
std::shared_ptr<const synth::Dataset> ensure_dataset(const std::filesystem::path& file, const synth::FactorSpec& spec,
                                                     synth::Renderer renderer, std::size_t resolution);

// Trains the run under artifacts/<name> unless a finished run with an
// identical config is already there. An interrupted run resumes from its
// latest checkpoint. Returns the run directory.
std::filesystem::path ensure_run(const std::filesystem::path& artifacts, RunSpec spec,
                                 std::shared_ptr<const synth::Dataset> data, std::ostream& log);

}  // namespace capvae::acceptance
