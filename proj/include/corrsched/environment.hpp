#pragma once

// Gateway simulation: replays a dataset frame, keeps the estimator and
// per-sensor error windows current, asks a scheduler for intervals and
// turns completed sleep windows into rewarded experiences.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corrsched/agent.hpp"
#include "corrsched/baselines.hpp"
#include "corrsched/covariance.hpp"
#include "corrsched/data.hpp"
#include "corrsched/estimator.hpp"
#include "corrsched/sensors.hpp"

namespace corrsched {

enum class CovarianceMode {
  kOnline,  // refit from received observations after every reception
  kFixed,   // keep the configured model
};

CovarianceMode parse_covariance_mode(const std::string& name);
const char* to_string(CovarianceMode mode);
IdealTrigger parse_ideal_trigger(const std::string& name);
const char* to_string(IdealTrigger trigger);

struct SimulationConfig {
  double step_seconds = 10.0;
  double start_interval_seconds = 900.0;
  double max_interval_seconds = 7200.0;
  double max_change_seconds = 250.0;
  double target_error = 0.01;
  double phi = 0.5;
  double upsilon = 10.0;
  double reward_scale = 10.0;
  bool penalize_overshoot = false;
  EnergyParams energy;
  // Battery level of each sensor as a fraction of E_0; empty means full.
  std::vector<double> initial_energy_fraction;
  CovarianceMode covariance_mode = CovarianceMode::kOnline;
  CovarianceModel model{0.002, 0.05, 1.0};
  double window_seconds = 86400.0;
  // Minimum spacing between online refits; 1 refits after every reception step.
  Step refit_interval_steps = 1;
  ExtractionOptions extraction;
  IdealTrigger ideal_trigger = IdealTrigger::kWindowAverage;
  std::uint64_t seed = 1;

  void validate() const;
  IntervalLimits limits() const;
  Step start_interval_steps() const;
};

// Eq. 12 style state. `error_ratios` holds each sensor's current
// average-error ratio; intervals are divided by T_max and energies by E_0.
AgentStateVector build_state(std::size_t sensor, std::span<const SensorState> sensors,
                             std::span<const double> error_ratios, const SimulationConfig& config);

// Values are floored before the geometric means so dead sensors and
// perfect windows stay finite.
inline constexpr double kEnergyFloorFraction = 1e-6;
inline constexpr double kRatioFloor = 1e-6;

double accuracy_reward(double average_error, double delta, double target_error, double upsilon,
                       bool penalize_overshoot = false);
double energy_reward(std::size_t sensor, std::span<const SensorState> sensors, Step old_interval, Step new_interval);
double combined_reward(double accuracy, double energy, double phi);

struct EpisodeRecord {
  int sensor_id = 0;
  Step window_start = 0;
  Step window_end = 0;
  double average_error = 0.0;
  double delta = 0.0;
  double accuracy_reward = 0.0;
  double energy_reward = 0.0;
  double reward = 0.0;  // combined and scaled, as stored for learning
  double action = 0.0;
  int action_index = -1;
  Step interval_steps = 0;
  double energy_fraction = 0.0;
};

inline constexpr int kCsvSchemaVersion = 1;
void write_episode_header(std::ostream& out);
void write_episode_row(std::ostream& out, const EpisodeRecord& record);

struct StepRange {
  Step begin = 0;
  Step end = 0;  // exclusive
};
// Throws kInvalidConfig when the two ranges share a step.
void check_disjoint(const StepRange& train, const StepRange& evaluation);

struct SensorSummary {
  int id = 0;
  long transmissions = 0;
  double mean_interval_seconds = 0.0;
  double lifetime_seconds = 0.0;
  double final_energy_joules = 0.0;
  double mean_error = 0.0;  // time average of the per-step MSE at its location
};

struct RunMetrics {
  std::vector<SensorSummary> sensors;
  long episodes = 0;
  double mean_error_ratio = 0.0;       // mean of windowed average error / target
  double fraction_above_target = 0.0;  // share of windows whose ratio exceeds 1
  double network_lifetime_seconds = 0.0;
  double native_lifetime_seconds = 0.0;
  double lifetime_gain = 0.0;  // network lifetime / native-period lifetime
  double mean_interval_seconds = 0.0;
  long oracle_violations = 0;  // steps where an instantaneous oracle left a location above target
};

class Simulation {
 public:
  // `frame` must already be normalized. The scheduler is borrowed.
  Simulation(const DatasetFrame& frame, const SimulationConfig& config, Scheduler& scheduler, bool learning);

  bool done() const { return now_ >= frame_.steps(); }
  // Advances one grid step; throws kEndOfData once the frame is exhausted.
  void step();
  void run();

  Step now() const { return now_; }
  std::span<const SensorState> sensors() const { return sensors_; }
  const std::vector<EpisodeRecord>& records() const { return records_; }
  const std::vector<Experience>& experiences() const { return experiences_; }
  const CovarianceModel& model() const { return model_; }
  long transmissions(std::size_t sensor) const { return tx_count_.at(sensor); }
  // MSE at every sensor location recorded at the latest step.
  const std::vector<double>& last_errors() const { return last_mse_; }

  // Optional event stream (transmissions and decisions), one CSV row each.
  void set_event_log(std::ostream* out);
  void set_keep_experiences(bool keep) { keep_experiences_ = keep; }

  RunMetrics metrics(double native_period_seconds) const;

 private:
  struct Pending {
    AgentStateVector state{};
    double action = 0.0;
    int action_index = -1;
    Step interval = 0;
    Step start = 0;
    double energy_reward = 0.0;
  };

  void transmit(std::size_t i);
  void decide(std::size_t i, const WindowSummary& window);
  double error_ratio(std::size_t i) const;
  void refresh_field();
  void log_event(const char* kind, std::size_t i, double a, double b);

  DatasetFrame frame_;
  SimulationConfig config_;
  IntervalLimits limits_;
  Scheduler& scheduler_;
  IdealScheduler* oracle_ = nullptr;
  bool learning_;

  CovarianceModel model_;
  std::vector<SensorState> sensors_;
  std::vector<Position> targets_;
  std::vector<double> initial_energy_;
  std::vector<Step> next_tx_;
  std::vector<long> tx_count_;
  std::vector<Step> first_tx_, last_tx_;
  std::vector<std::optional<Pending>> pending_;
  std::vector<double> error_sum_;
  std::vector<double> last_mse_;
  std::vector<double> closed_ratio_;
  AverageErrorTracker tracker_;
  ObservationWindow window_;
  FieldEstimator field_;
  bool field_dirty_ = true;
  Step now_ = 0;
  Step last_refit_ = -1;
  long oracle_violations_ = 0;

  std::vector<EpisodeRecord> records_;
  std::vector<Experience> experiences_;
  bool keep_experiences_ = false;
  std::ostream* events_ = nullptr;
};

}  // namespace corrsched
