#include "corrsched/environment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>

#include "corrsched/error.hpp"
#include "corrsched/rng.hpp"

namespace corrsched {

namespace {

bool is_multiple(double value, double step) {
  const double q = value / step;
  return std::abs(q - std::round(q)) < 1e-9;
}

double geometric_mean_excluding(std::size_t skip, std::size_t n, auto&& value) {
  double log_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (i != skip) log_sum += std::log(value(i));
  return std::exp(log_sum / static_cast<double>(n - 1));
}

}  // namespace

CovarianceMode parse_covariance_mode(const std::string& name) {
  if (name == "online") return CovarianceMode::kOnline;
  if (name == "fixed") return CovarianceMode::kFixed;
  fail(ErrorKind::kInvalidConfig, "unknown covariance mode '" + name + "' (online|fixed)");
}

const char* to_string(CovarianceMode mode) { return mode == CovarianceMode::kOnline ? "online" : "fixed"; }

IdealTrigger parse_ideal_trigger(const std::string& name) {
  if (name == "instantaneous") return IdealTrigger::kInstantaneous;
  if (name == "window") return IdealTrigger::kWindowAverage;
  fail(ErrorKind::kInvalidConfig, "unknown ideal trigger '" + name + "' (instantaneous|window)");
}

const char* to_string(IdealTrigger trigger) {
  return trigger == IdealTrigger::kInstantaneous ? "instantaneous" : "window";
}

void SimulationConfig::validate() const {
  energy.validate();
  require(step_seconds > 0.0, ErrorKind::kInvalidConfig, "step_seconds must be positive");
  require(phi >= 0.25 && phi <= 0.75, ErrorKind::kInvalidConfig, "phi must lie in [0.25, 0.75]");
  require(start_interval_seconds > 0.0 && start_interval_seconds <= max_interval_seconds, ErrorKind::kInvalidConfig,
          "start interval must be positive and at most the maximum interval");
  require(is_multiple(start_interval_seconds, step_seconds) && is_multiple(max_interval_seconds, step_seconds) &&
              is_multiple(max_change_seconds, step_seconds),
          ErrorKind::kInvalidConfig, "interval settings must be multiples of step_seconds");
  require(max_change_seconds > 0.0, ErrorKind::kInvalidConfig, "max_change_seconds must be positive");
  require(target_error > 0.0, ErrorKind::kInvalidConfig, "target_error must be positive");
  require(reward_scale > 0.0 && upsilon >= 0.0, ErrorKind::kInvalidConfig, "reward scale/upsilon out of range");
  require(window_seconds >= step_seconds, ErrorKind::kInvalidConfig, "observation window shorter than one step");
  require(refit_interval_steps >= 1, ErrorKind::kInvalidConfig, "refit interval must be at least one step");
  require(model.theta_time >= 0.0 && model.theta_space >= 0.0 && model.process_variance > 0.0,
          ErrorKind::kInvalidConfig, "covariance model parameters out of range");
  for (double f : initial_energy_fraction)
    require(f > 0.0 && f <= 1.0, ErrorKind::kInvalidConfig, "initial energy fractions must lie in (0, 1]");
}

IntervalLimits SimulationConfig::limits() const {
  return IntervalLimits{step_seconds, max_interval_seconds, max_change_seconds};
}

Step SimulationConfig::start_interval_steps() const {
  return static_cast<Step>(std::llround(start_interval_seconds / step_seconds));
}

AgentStateVector build_state(std::size_t sensor, std::span<const SensorState> sensors,
                             std::span<const double> error_ratios, const SimulationConfig& config) {
  const std::size_t n = sensors.size();
  require(n >= 2, ErrorKind::kInvalidConfig, "the state needs at least two sensors");
  require(sensor < n && error_ratios.size() == n, ErrorKind::kInvalidInput, "state inputs size mismatch");
  const double t_max = static_cast<double>(config.limits().max_steps());
  const double e0 = config.energy.initial_energy_joules;

  auto interval = [&](std::size_t i) { return static_cast<double>(sensors[i].update_interval_steps) / t_max; };
  auto energy = [&](std::size_t i) { return std::clamp(sensors[i].energy_joules / e0, 0.0, 1.0); };
  auto floored_energy = [&](std::size_t i) { return std::max(energy(i), kEnergyFloorFraction); };
  auto ratio = [&](std::size_t i) { return std::max(error_ratios[i], kRatioFloor); };

  AgentStateVector s{};
  s[0] = interval(sensor);
  s[1] = energy(sensor);
  s[2] = error_ratios[sensor];
  s[3] = geometric_mean_excluding(sensor, n, interval);
  s[4] = geometric_mean_excluding(sensor, n, floored_energy);
  s[5] = geometric_mean_excluding(sensor, n, ratio);
  return s;
}

double accuracy_reward(double average_error, double delta, double target_error, double upsilon,
                       bool penalize_overshoot) {
  require(average_error >= 0.0 && target_error > 0.0, ErrorKind::kInvalidInput, "errors must be non-negative");
  if (average_error <= target_error) {
    const double r = average_error / target_error;
    return r * r + upsilon * delta;
  }
  const double over = (average_error - target_error) / target_error;
  return (penalize_overshoot ? -1.0 : 1.0) * over * over - upsilon * delta;
}

double energy_reward(std::size_t sensor, std::span<const SensorState> sensors, Step old_interval, Step new_interval) {
  require(sensor < sensors.size(), ErrorKind::kInvalidInput, "sensor index out of range");
  double total = 0.0;
  for (const auto& s : sensors) total += std::max(0.0, s.energy_joules);
  require(total > 0.0, ErrorKind::kInvalidState, "every sensor is out of energy");
  if (new_interval == old_interval) return 0.0;
  const double relative = static_cast<double>(sensors.size()) * std::max(0.0, sensors[sensor].energy_joules) / total;
  return new_interval > old_interval ? 1.0 - relative : relative - 1.0;
}

double combined_reward(double accuracy, double energy, double phi) {
  require(phi >= 0.25 && phi <= 0.75, ErrorKind::kInvalidConfig, "phi must lie in [0.25, 0.75]");
  return phi * accuracy + (1.0 - phi) * energy;
}

void write_episode_header(std::ostream& out) {
  out << "# corrsched episodes v" << kCsvSchemaVersion << "\n";
  out << "sensor_id,window_start,window_end,average_error,delta,accuracy_reward,energy_reward,reward,action,"
         "action_index,interval_steps,energy_fraction\n";
}

void write_episode_row(std::ostream& out, const EpisodeRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%lld,%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%lld,%.10g\n", r.sensor_id,
                static_cast<long long>(r.window_start), static_cast<long long>(r.window_end), r.average_error, r.delta,
                r.accuracy_reward, r.energy_reward, r.reward, r.action, r.action_index,
                static_cast<long long>(r.interval_steps), r.energy_fraction);
  out << buf;
}

void check_disjoint(const StepRange& train, const StepRange& evaluation) {
  require(train.begin < train.end && evaluation.begin < evaluation.end, ErrorKind::kInvalidConfig,
          "split ranges must be non-empty");
  const bool overlap = train.begin < evaluation.end && evaluation.begin < train.end;
  require(!overlap, ErrorKind::kInvalidConfig, "training and evaluation splits overlap");
}

Simulation::Simulation(const DatasetFrame& frame, const SimulationConfig& config, Scheduler& scheduler, bool learning)
    : frame_(frame),
      config_(config),
      limits_(config.limits()),
      scheduler_(scheduler),
      learning_(learning),
      model_(config.model),
      tracker_(frame.sensors()),
      window_(static_cast<Step>(std::llround(config.window_seconds / config.step_seconds))) {
  config_.validate();
  const std::size_t n = frame_.sensors();
  require(n >= 2, ErrorKind::kInvalidConfig, "a simulation needs at least two sensors");
  require(frame_.steps() > 0, ErrorKind::kEmptyDataset, "dataset frame has no steps");
  require(std::abs(frame_.step_seconds - config_.step_seconds) < 1e-9, ErrorKind::kInvalidConfig,
          "dataset grid step differs from step_seconds");
  require(config_.initial_energy_fraction.empty() || config_.initial_energy_fraction.size() == n,
          ErrorKind::kInvalidConfig, "initial energy fractions must cover every sensor");
  oracle_ = dynamic_cast<IdealScheduler*>(&scheduler_);

  Rng rng(config_.seed);
  const Step start = config_.start_interval_steps();
  sensors_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = sensors_[i];
    s.id = frame_.sensor_ids[i];
    s.position = frame_.positions[i];
    const double fraction = config_.initial_energy_fraction.empty() ? 1.0 : config_.initial_energy_fraction[i];
    s.energy_joules = fraction * config_.energy.initial_energy_joules;
    s.update_interval_steps = start;
    targets_.push_back(s.position);
    initial_energy_.push_back(s.energy_joules);
    next_tx_.push_back(1 + static_cast<Step>(rng.below(static_cast<std::uint64_t>(start))));
  }
  tx_count_.assign(n, 0);
  first_tx_.assign(n, -1);
  last_tx_.assign(n, -1);
  pending_.assign(n, std::nullopt);
  error_sum_.assign(n, 0.0);
  last_mse_.assign(n, model_.process_variance);
  closed_ratio_.assign(n, 0.0);
  // Nothing is known before the first step, so every window opens with
  // the prior variance and a transmission at step 0 still closes one.
  for (std::size_t i = 0; i < n; ++i) tracker_.record(i, model_.process_variance);
  scheduler_.begin_run(n);
  scheduler_.set_exploration(learning_);
}

void Simulation::set_event_log(std::ostream* out) {
  events_ = out;
  if (events_) *events_ << "# corrsched events v" << kCsvSchemaVersion << "\nstep,sensor_id,event,a,b\n";
}

void Simulation::log_event(const char* kind, std::size_t i, double a, double b) {
  if (!events_) return;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%d,%s,%.17g,%.17g\n", static_cast<long long>(now_), sensors_[i].id, kind, a, b);
  *events_ << buf;
}

double Simulation::error_ratio(std::size_t i) const {
  if (tracker_.samples(i) > 0) return tracker_.average(i) / config_.target_error;
  return closed_ratio_[i];
}

void Simulation::refresh_field() {
  if (!field_dirty_) return;
  field_.rebuild(sensors_, model_, config_.step_seconds);
  field_dirty_ = false;
}

void Simulation::transmit(std::size_t i) {
  auto& s = sensors_[i];
  const double value = frame_.value(now_, i);
  require(std::isfinite(value), ErrorKind::kDataGap,
          "no ground truth for sensor " + std::to_string(s.id) + " at step " + std::to_string(now_));
  s.last_value = value;
  s.last_tx_step = now_;
  s.has_observation = true;
  ++tx_count_[i];
  if (first_tx_[i] < 0) first_tx_[i] = now_;
  last_tx_[i] = now_;
  s.energy_joules = initial_energy_[i] - config_.energy.continuous_power_watts * config_.step_seconds *
                                             static_cast<double>(now_) -
                    config_.energy.tx_energy_joules * static_cast<double>(tx_count_[i]);
  if (s.energy_joules <= 0.0) {
    s.energy_joules = 0.0;
    s.dead = true;
  }
  window_.push({s.id, now_, value});
  field_dirty_ = true;
  log_event("tx", i, value, s.energy_joules);
}

void Simulation::decide(std::size_t i, const WindowSummary& window) {
  auto& s = sensors_[i];
  const double ratio = window.average / config_.target_error;
  closed_ratio_[i] = ratio;

  std::vector<double> ratios(sensors_.size());
  for (std::size_t j = 0; j < sensors_.size(); ++j) ratios[j] = j == i ? ratio : error_ratio(j);
  const AgentStateVector state = build_state(i, sensors_, ratios, config_);

  if (pending_[i]) {
    const Pending& p = *pending_[i];
    EpisodeRecord rec;
    rec.sensor_id = s.id;
    rec.window_start = p.start;
    rec.window_end = now_;
    rec.average_error = window.average;
    rec.delta = window.delta;
    rec.accuracy_reward = accuracy_reward(window.average, window.delta, config_.target_error, config_.upsilon,
                                          config_.penalize_overshoot);
    rec.energy_reward = p.energy_reward;
    rec.reward = config_.reward_scale * combined_reward(rec.accuracy_reward, rec.energy_reward, config_.phi);
    rec.action = p.action;
    rec.action_index = p.action_index;
    rec.interval_steps = p.interval;
    rec.energy_fraction = s.energy_joules / config_.energy.initial_energy_joules;
    records_.push_back(rec);

    Experience e{p.state, p.action, p.action_index, rec.reward, state};
    if (keep_experiences_) experiences_.push_back(e);
    if (learning_) scheduler_.learn(e);
  }
  if (s.dead) {
    pending_[i].reset();
    return;
  }

  DecisionInput input{i, state, s.update_interval_steps, now_};
  const Decision d = scheduler_.decide(input);
  const Step interval = std::clamp<Step>(d.interval_steps, 1, limits_.max_steps());
  Pending p;
  p.state = state;
  p.action = d.action;
  p.action_index = d.action_index;
  p.interval = interval;
  p.start = now_;
  p.energy_reward = energy_reward(i, sensors_, s.update_interval_steps, interval);
  pending_[i] = p;
  s.update_interval_steps = interval;
  next_tx_[i] = now_ + interval;
  log_event("decide", i, d.action, static_cast<double>(interval));
}

void Simulation::step() {
  require(!done(), ErrorKind::kEndOfData, "dataset exhausted at step " + std::to_string(now_));
  const std::size_t n = sensors_.size();

  std::vector<std::size_t> fired;
  for (std::size_t i = 0; i < n; ++i) {
    if (sensors_[i].dead || next_tx_[i] != now_) continue;
    transmit(i);
    fired.push_back(i);
  }

  if (oracle_) {
    std::vector<double> truth(n);
    for (std::size_t i = 0; i < n; ++i) truth[i] = frame_.value(now_, i);
    OracleContext ctx{sensors_, truth, model_, config_.step_seconds, now_, config_.target_error, &tracker_};
    for (std::size_t i : ideal_schedule_step(ctx, oracle_->trigger())) {
      transmit(i);
      fired.push_back(i);
    }
  }

  // Windows close on the samples before this step; the fresh errors
  // below open the next window.
  std::vector<WindowSummary> closed;
  closed.reserve(fired.size());
  for (std::size_t i : fired) {
    closed.push_back(tracker_.close(i));
    if (tx_count_[i] == 1) tracker_.forget_previous(i);
  }

  refresh_field();
  last_mse_ = field_.mse_at(targets_, now_);
  bool violated = false;
  for (std::size_t i = 0; i < n; ++i) {
    tracker_.record(i, last_mse_[i]);
    error_sum_[i] += last_mse_[i];
    if (!sensors_[i].dead && last_mse_[i] > config_.target_error + 1e-12) violated = true;
  }
  if (oracle_ && oracle_->trigger() == IdealTrigger::kInstantaneous && violated) ++oracle_violations_;

  for (std::size_t k = 0; k < fired.size(); ++k) decide(fired[k], closed[k]);

  const double drained = config_.energy.continuous_power_watts * config_.step_seconds * static_cast<double>(now_ + 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = sensors_[i];
    if (s.dead) continue;
    s.energy_joules =
        initial_energy_[i] - drained - config_.energy.tx_energy_joules * static_cast<double>(tx_count_[i]);
    if (s.energy_joules <= 0.0) {
      s.energy_joules = 0.0;
      s.dead = true;
      pending_[i].reset();
    }
  }

  if (config_.covariance_mode == CovarianceMode::kOnline && !fired.empty() &&
      (last_refit_ < 0 || now_ - last_refit_ >= config_.refit_interval_steps)) {
    std::map<int, Position> positions;
    for (const auto& s : sensors_) positions[s.id] = s.position;
    auto options = config_.extraction;
    options.step_seconds = config_.step_seconds;
    const CovarianceModel updated = refit(model_, extract_scaling_parameters(window_, positions, options));
    if (updated.theta_time != model_.theta_time || updated.theta_space != model_.theta_space) {
      model_ = updated;
      field_dirty_ = true;
    }
    last_refit_ = now_;
  }
  ++now_;
}

void Simulation::run() {
  while (!done()) step();
}

RunMetrics Simulation::metrics(double native_period_seconds) const {
  RunMetrics m;
  const auto& e = config_.energy;
  std::vector<double> intervals;
  for (std::size_t i = 0; i < sensors_.size(); ++i) {
    SensorSummary s;
    s.id = sensors_[i].id;
    s.transmissions = tx_count_[i];
    if (tx_count_[i] >= 2)
      s.mean_interval_seconds = static_cast<double>(last_tx_[i] - first_tx_[i]) * config_.step_seconds /
                                static_cast<double>(tx_count_[i] - 1);
    else
      s.mean_interval_seconds = static_cast<double>(sensors_[i].update_interval_steps) * config_.step_seconds;
    s.lifetime_seconds = initial_energy_[i] / (e.continuous_power_watts + e.tx_energy_joules / s.mean_interval_seconds);
    s.final_energy_joules = sensors_[i].energy_joules;
    s.mean_error = now_ > 0 ? error_sum_[i] / static_cast<double>(now_) : 0.0;
    intervals.push_back(s.mean_interval_seconds);
    m.sensors.push_back(s);
  }
  m.episodes = static_cast<long>(records_.size());
  long above = 0;
  double ratio_sum = 0.0;
  for (const auto& r : records_) {
    const double ratio = r.average_error / config_.target_error;
    ratio_sum += ratio;
    if (ratio > 1.0) ++above;
  }
  if (!records_.empty()) {
    m.mean_error_ratio = ratio_sum / static_cast<double>(records_.size());
    m.fraction_above_target = static_cast<double>(above) / static_cast<double>(records_.size());
  }
  m.network_lifetime_seconds = std::numeric_limits<double>::infinity();
  for (const auto& s : m.sensors) m.network_lifetime_seconds = std::min(m.network_lifetime_seconds, s.lifetime_seconds);
  m.mean_interval_seconds = std::accumulate(intervals.begin(), intervals.end(), 0.0) / static_cast<double>(intervals.size());
  if (native_period_seconds > 0.0) {
    m.native_lifetime_seconds = expected_lifetime_seconds(e, native_period_seconds);
    m.lifetime_gain = m.network_lifetime_seconds / m.native_lifetime_seconds;
  }
  m.oracle_violations = oracle_violations_;
  return m;
}

}  // namespace corrsched
