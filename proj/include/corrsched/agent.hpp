#pragma once

// Common decision interface shared by the learned schedulers and the
// baselines, plus the experience/replay plumbing used by the learners.

#include <array>
#include <cstddef>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "corrsched/rng.hpp"
#include "corrsched/sensors.hpp"

namespace corrsched {

inline constexpr std::size_t kStateSize = 6;

// Own interval / T_max, own energy / E_0, own error ratio, then the
// geometric means of the same three quantities over all other sensors.
using AgentStateVector = std::array<double, kStateSize>;

struct Experience {
  AgentStateVector state{};
  double action = 0.0;     // continuous action in [-1, 1]
  int action_index = -1;   // discrete action (DQN), -1 otherwise
  double reward = 0.0;
  AgentStateVector next_state{};
};

// Bounded FIFO with uniform sampling without replacement inside a batch.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(const Experience& e);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return buffer_.size(); }
  // Oldest-first access, 0 = oldest retained entry.
  const Experience& at(std::size_t i) const;
  std::vector<const Experience*> sample(std::size_t batch, Rng& rng) const;

 private:
  std::vector<Experience> buffer_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
};

// Ornstein-Uhlenbeck exploration noise, one step per decision.
class OUNoise {
 public:
  OUNoise(double theta = 0.15, double sigma = 0.2, double dt = 1.0, double mean = 0.0)
      : theta_(theta), sigma_(sigma), dt_(dt), mean_(mean), value_(mean) {}

  double sample(Rng& rng);
  void reset() { value_ = mean_; }
  double value() const { return value_; }
  void set_value(double v) { value_ = v; }

 private:
  double theta_, sigma_, dt_, mean_;
  double value_;
};

double round_half_away(double x);

struct IntervalLimits {
  double step_seconds = 10.0;
  double max_interval_seconds = 7200.0;  // T_max
  double max_change_seconds = 250.0;     // U_max

  Step max_steps() const;
};

// New interval = clamp(current + round(U_max * action / t_S), 1, T_max / t_S) steps.
Step map_action_to_interval(Step current_steps, double action, const IntervalLimits& limits);

struct Decision {
  double action = 0.0;
  int action_index = -1;
  Step interval_steps = 1;
};

struct DecisionInput {
  std::size_t sensor = 0;
  AgentStateVector state{};
  Step current_interval = 1;
  Step now = 0;
};

class Scheduler {
 public:
  virtual ~Scheduler() = default;

  virtual std::string_view name() const = 0;
  virtual Decision decide(const DecisionInput& input) = 0;
  // Completed episode; learners store it and run one training step.
  virtual void learn(const Experience&) {}
  virtual bool learns() const { return false; }
  virtual void set_exploration(bool) {}
  // Called at the start of every simulation run.
  virtual void begin_run(std::size_t /*sensors*/) {}
};

}  // namespace corrsched
