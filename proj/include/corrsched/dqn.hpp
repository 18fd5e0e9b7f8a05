#pragma once

// Q-learning baseline over five interval changes.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "corrsched/agent.hpp"
#include "corrsched/ddpg.hpp"
#include "corrsched/nn.hpp"

namespace corrsched {

// Interval change per action index, in steps.
inline constexpr std::array<Step, 5> kDqnActionSteps = {-10, -1, 0, 1, 10};

struct DqnConfig {
  std::vector<int> hidden = {24, 24};
  double learning_rate = 1e-3;
  double gamma = 0.2;
  double explore_rate = 0.15;
  double tau = 1e-3;
  std::size_t batch_size = 32;
  std::size_t memory_size = 20000;
  std::size_t warmup = 1000;
  double ratio_clip = 10.0;
  std::uint64_t seed = 1;
};

class DqnAgent : public Scheduler {
 public:
  DqnAgent(const DqnConfig& config, const IntervalLimits& limits);

  std::string_view name() const override { return "dqn"; }
  Decision decide(const DecisionInput& input) override;
  void learn(const Experience& e) override;
  bool learns() const override { return true; }
  void set_exploration(bool explore) override { explore_ = explore; }

  std::array<double, kDqnActionSteps.size()> q_values(const AgentStateVector& state);
  // Epsilon-greedy; greedy ties go to the lowest action index.
  int act(const AgentStateVector& state, bool explore);
  void remember(const Experience& e) { memory_.push(e); }
  std::optional<TrainStats> train_step();

  nn::Network& network() { return net_; }
  nn::Network& target() { return target_; }
  const ReplayMemory& memory() const { return memory_; }
  DqnConfig& config() { return config_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  Eigen::RowVectorXd encode(const AgentStateVector& state) const;

  DqnConfig config_;
  IntervalLimits limits_;
  Rng rng_;
  nn::Network net_, target_;
  nn::AdamState opt_;
  ReplayMemory memory_;
  bool explore_ = true;
};

Step apply_dqn_action(Step current_steps, int action_index, const IntervalLimits& limits);

}  // namespace corrsched
