#pragma once

#include <cstdint>

#include <nlohmann/json_fwd.hpp>

namespace capvae {

// Linear ramp of the target capacity C (nats), constant after the ramp.
struct CapacitySchedule {
  double c_start = 0.0;
  double c_end = 25.0;
  std::uint64_t ramp_iterations = 30000;

  void validate() const;
  double at(std::uint64_t iteration) const;

  friend bool operator==(const CapacitySchedule&, const CapacitySchedule&) = default;
};

// c_start + (c_end - c_start) * min(iteration / ramp_iterations, 1)
double capacity_at(const CapacitySchedule& schedule, std::uint64_t iteration);

void to_json(nlohmann::json& j, const CapacitySchedule& s);
void from_json(const nlohmann::json& j, CapacitySchedule& s);

}  // namespace capvae
