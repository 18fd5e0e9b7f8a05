#include "corrsched/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "corrsched/error.hpp"

namespace corrsched {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kInvalidState: return "invalid state";
    case ErrorKind::kInvalidConfig: return "invalid configuration";
    case ErrorKind::kSingularSystem: return "singular system";
    case ErrorKind::kDataGap: return "data gap";
    case ErrorKind::kEndOfData: return "end of data";
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kEmptyDataset: return "empty dataset";
    case ErrorKind::kSize: return "size error";
    case ErrorKind::kMissingArtifact: return "missing artifact";
  }
  return "error";
}

double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

void EnergyParams::validate() const {
  require(initial_energy_joules > 0.0 && continuous_power_watts > 0.0 && tx_energy_joules > 0.0,
          ErrorKind::kInvalidConfig, "energy parameters must be strictly positive");
}

Step age_of_information(const SensorState& sensor, const SimClock& now) {
  require(now.step_index >= sensor.last_tx_step, ErrorKind::kInvalidInput,
          "clock step " + std::to_string(now.step_index) + " precedes last transmission at step " +
              std::to_string(sensor.last_tx_step));
  return now.step_index - sensor.last_tx_step;
}

double expected_lifetime_seconds(const EnergyParams& params, double interval_seconds) {
  require(interval_seconds > 0.0 && std::isfinite(interval_seconds), ErrorKind::kInvalidInput,
          "update interval must be positive");
  return params.initial_energy_joules /
         (params.continuous_power_watts + params.tx_energy_joules / interval_seconds);
}

SensorState apply_energy_drain(SensorState sensor, const EnergyParams& params, double step_seconds,
                               Step elapsed_steps, Step transmissions) {
  require(elapsed_steps >= 0 && transmissions >= 0, ErrorKind::kInvalidInput,
          "drain counts must be non-negative");
  const double drained = params.continuous_power_watts * step_seconds * static_cast<double>(elapsed_steps) +
                         params.tx_energy_joules * static_cast<double>(transmissions);
  sensor.energy_joules = std::max(0.0, sensor.energy_joules - drained);
  if (sensor.energy_joules <= 0.0) sensor.dead = true;
  return sensor;
}

double network_lifetime(std::span<const double> mean_interval_seconds, const EnergyParams& params) {
  require(!mean_interval_seconds.empty(), ErrorKind::kInvalidInput, "network has no sensors");
  double lifetime = std::numeric_limits<double>::infinity();
  for (double t : mean_interval_seconds) lifetime = std::min(lifetime, expected_lifetime_seconds(params, t));
  return lifetime;
}

double network_lifetime(std::span<const SensorState> sensors, const EnergyParams& params,
                        double step_seconds) {
  std::vector<double> intervals;
  intervals.reserve(sensors.size());
  for (const auto& s : sensors) {
    require(s.update_interval_steps >= 1, ErrorKind::kInvalidInput,
            "sensor " + std::to_string(s.id) + " has no update interval");
    intervals.push_back(static_cast<double>(s.update_interval_steps) * step_seconds);
  }
  return network_lifetime(intervals, params);
}

}  // namespace corrsched
