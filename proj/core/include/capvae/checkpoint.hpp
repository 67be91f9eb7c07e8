#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capvae/adam.hpp"
#include "capvae/graph.hpp"

namespace capvae::nn {

// Binary checkpoint ("CAPK", little-endian):
//   magic "CAPK" | u16 version | u32 parameter count
//   per parameter: u8 name length + UTF-8 name | u8 rank | u32 dims... | f32 payload
//   optional Adam block: u8 present | u64 step | f64 lr, beta1, beta2, eps |
//     u32 count | tensor entries named "m/<param>" then "v/<param>" (same layout)
//   optional extras: u32 count | per entry u8 name length + name | u64 value
struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::vector<NamedTensor> parameters;
  std::optional<AdamState<float>> adam;
  // Trainer bookkeeping (iteration, RNG state, EMA values as bit-cast doubles).
  std::map<std::string, std::uint64_t> extras;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, std::span<Parameter<float>* const> params,
                      const AdamState<float>* adam,
                      const std::map<std::string, std::uint64_t>& extras = {});

Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into `params`, matched by name. Throws FormatError
// for a missing name and ShapeError for a shape mismatch.
void load_parameters(const Checkpoint& ckpt, std::span<Parameter<float>* const> params);

}  // namespace capvae::nn
