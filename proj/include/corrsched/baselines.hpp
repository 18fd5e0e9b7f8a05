#pragma once

// Non-learning comparators: the dataset-native fixed period and the
// ground-truth oracle that transmits only when accuracy would be lost.

#include <span>
#include <vector>

#include "corrsched/agent.hpp"
#include "corrsched/covariance.hpp"
#include "corrsched/estimator.hpp"

namespace corrsched {

// Transmission j of a sensor happens at anchor + round(j * period / t_S),
// so the long-run mean interval equals the native period exactly even
// when it is not a multiple of the step.
class FixedScheduler : public Scheduler {
 public:
  FixedScheduler(double period_seconds, double step_seconds);

  std::string_view name() const override { return "fixed"; }
  Decision decide(const DecisionInput& input) override;
  void begin_run(std::size_t sensors) override;

  double period_seconds() const { return period_seconds_; }

 private:
  struct Phase {
    Step anchor = -1;
    Step count = 0;
  };
  double period_seconds_;
  double step_seconds_;
  std::vector<Phase> phases_;
};

enum class IdealTrigger {
  kInstantaneous,  // current MSE at the location exceeds the target
  kWindowAverage,  // average MSE since the last transmission would exceed it
};

struct OracleContext {
  std::span<const SensorState> sensors;
  std::span<const double> truth;  // ground truth per sensor at `now`
  CovarianceModel model;
  double step_seconds = 10.0;
  Step now = 0;
  double target_error = 0.01;
  const AverageErrorTracker* tracker = nullptr;  // required for kWindowAverage
};

// Sensors instructed to transmit at this step, in trigger order. The
// worst violation is served first and every location is re-evaluated
// after each transmission.
std::vector<std::size_t> ideal_schedule_step(const OracleContext& ctx, IdealTrigger trigger);

class IdealScheduler : public Scheduler {
 public:
  IdealScheduler(IdealTrigger trigger, const IntervalLimits& limits) : trigger_(trigger), limits_(limits) {}

  std::string_view name() const override { return "ideal"; }
  // Sleeps for the longest allowed interval; the oracle wakes it earlier.
  Decision decide(const DecisionInput& input) override;
  IdealTrigger trigger() const { return trigger_; }

 private:
  IdealTrigger trigger_;
  IntervalLimits limits_;
};

}  // namespace corrsched
