#include "corrsched/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corrsched/error.hpp"

namespace corrsched {

FixedScheduler::FixedScheduler(double period_seconds, double step_seconds)
    : period_seconds_(period_seconds), step_seconds_(step_seconds) {
  require(period_seconds > 0.0 && step_seconds > 0.0, ErrorKind::kInvalidConfig, "fixed period must be positive");
}

void FixedScheduler::begin_run(std::size_t sensors) { phases_.assign(sensors, Phase{}); }

Decision FixedScheduler::decide(const DecisionInput& input) {
  if (input.sensor >= phases_.size()) phases_.resize(input.sensor + 1);
  auto& phase = phases_[input.sensor];
  if (phase.anchor < 0) {
    phase.anchor = input.now;
    phase.count = 0;
  }
  const double per_step = period_seconds_ / step_seconds_;
  ++phase.count;
  const Step next = phase.anchor + static_cast<Step>(round_half_away(static_cast<double>(phase.count) * per_step));
  Decision d;
  d.interval_steps = std::max<Step>(1, next - input.now);
  return d;
}

Decision IdealScheduler::decide(const DecisionInput&) {
  Decision d;
  d.interval_steps = limits_.max_steps();
  return d;
}

std::vector<std::size_t> ideal_schedule_step(const OracleContext& ctx, IdealTrigger trigger) {
  require(ctx.truth.size() == ctx.sensors.size(), ErrorKind::kDataGap,
          "ground truth unavailable at step " + std::to_string(ctx.now));
  if (trigger == IdealTrigger::kWindowAverage)
    require(ctx.tracker != nullptr && ctx.tracker->size() == ctx.sensors.size(), ErrorKind::kInvalidInput,
            "window-average trigger needs the error tracker");

  std::vector<SensorState> sensors(ctx.sensors.begin(), ctx.sensors.end());
  std::vector<Position> targets;
  targets.reserve(sensors.size());
  for (const auto& s : sensors) targets.push_back(s.position);

  std::vector<std::size_t> fired;
  FieldEstimator field;
  for (std::size_t round = 0; round <= sensors.size(); ++round) {
    field.rebuild(sensors, ctx.model, ctx.step_seconds);
    const auto mse = field.mse_at(targets, ctx.now);

    std::size_t worst = sensors.size();
    double worst_excess = 0.0;
    for (std::size_t i = 0; i < sensors.size(); ++i) {
      if (sensors[i].dead) continue;
      if (sensors[i].has_observation && sensors[i].last_tx_step == ctx.now) continue;
      double level = mse[i];
      if (trigger == IdealTrigger::kWindowAverage) {
        const double n = static_cast<double>(ctx.tracker->samples(i));
        const double sum = n > 0.0 ? ctx.tracker->average(i) * n : 0.0;
        level = (sum + mse[i]) / (n + 1.0);
      }
      const double excess = level - ctx.target_error;
      if (excess > worst_excess) {
        worst_excess = excess;
        worst = i;
      }
    }
    if (worst == sensors.size()) break;

    const double value = ctx.truth[worst];
    require(std::isfinite(value), ErrorKind::kDataGap,
            "no ground truth for sensor " + std::to_string(sensors[worst].id) + " at step " + std::to_string(ctx.now));
    sensors[worst].has_observation = true;
    sensors[worst].last_tx_step = ctx.now;
    sensors[worst].last_value = value;
    fired.push_back(worst);
  }
  return fired;
}

}  // namespace corrsched
