#include "capvae/capacity_schedule.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "capvae/error.hpp"

namespace capvae {

void CapacitySchedule::validate() const {
  if (!std::isfinite(c_start) || c_start < 0.0) throw InvalidArgument("c_start must be >= 0 nats");
  if (!std::isfinite(c_end) || c_end < c_start) throw InvalidArgument("c_end must be >= c_start");
  if (ramp_iterations == 0) throw InvalidArgument("ramp_iters must be positive");
}

double CapacitySchedule::at(std::uint64_t iteration) const { return capacity_at(*this, iteration); }

double capacity_at(const CapacitySchedule& s, std::uint64_t iteration) {
  if (iteration >= s.ramp_iterations) return s.c_end;
  const double frac = static_cast<double>(iteration) / static_cast<double>(s.ramp_iterations);
  return s.c_start + (s.c_end - s.c_start) * std::min(frac, 1.0);
}

void to_json(nlohmann::json& j, const CapacitySchedule& s) {
  j = nlohmann::json{{"c_start", s.c_start}, {"c_end", s.c_end}, {"ramp_iters", s.ramp_iterations}};
}

void from_json(const nlohmann::json& j, CapacitySchedule& s) {
  for (const auto& [key, _] : j.items())
    if (key != "c_start" && key != "c_end" && key != "ramp_iters")
      throw InvalidArgument("unknown capacity schedule field: " + key);
  if (j.contains("c_start")) j.at("c_start").get_to(s.c_start);
  if (j.contains("c_end")) j.at("c_end").get_to(s.c_end);
  if (j.contains("ramp_iters")) j.at("ramp_iters").get_to(s.ramp_iterations);
}

}  // namespace capvae
