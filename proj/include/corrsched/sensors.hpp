#pragma once

// Core domain types: simulation time, per-sensor state held by the
// gateway, and the battery/lifetime model.

#include <cstdint>
#include <span>
#include <vector>

namespace corrsched {

using Step = std::int64_t;

struct Position {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Position& a, const Position& b);

// Discrete clock; absolute time is step_index * step_seconds.
struct SimClock {
  Step step_index = 0;
  double step_seconds = 10.0;

  double seconds() const { return static_cast<double>(step_index) * step_seconds; }
};

struct EnergyParams {
  double initial_energy_joules = 6696.0;   // E_0
  double continuous_power_watts = 15e-6;   // P_c
  double tx_energy_joules = 78.7e-3;       // E_tr

  void validate() const;
};

struct SensorState {
  int id = 0;
  Position position;
  double energy_joules = 0.0;
  Step update_interval_steps = 1;
  Step last_tx_step = 0;
  double last_value = 0.0;
  bool has_observation = false;
  bool dead = false;
};

// Steps elapsed since the gateway last received from `sensor`.
Step age_of_information(const SensorState& sensor, const SimClock& now);

// Analytic lifetime E_0 / (P_c + E_tr / T) for a fixed update interval.
double expected_lifetime_seconds(const EnergyParams& params, double interval_seconds);

// Discrete drain: P_c over elapsed time plus E_tr per transmission,
// floored at zero. A sensor drained to zero is flagged dead.
SensorState apply_energy_drain(SensorState sensor, const EnergyParams& params,
                               double step_seconds, Step elapsed_steps, Step transmissions);

// Lifetime of the shortest-lived sensor, given each sensor's average
// interval in seconds.
double network_lifetime(std::span<const double> mean_interval_seconds, const EnergyParams& params);

// Same, using each sensor's current update interval.
double network_lifetime(std::span<const SensorState> sensors, const EnergyParams& params,
                        double step_seconds);

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kSecondsPerYear = 365.0 * kSecondsPerDay;

}  // namespace corrsched
