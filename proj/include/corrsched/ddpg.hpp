#pragma once

// Deterministic policy-gradient actor/critic with target networks, one
// policy shared across every sensor.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "corrsched/agent.hpp"
#include "corrsched/nn.hpp"

namespace corrsched {

struct DdpgConfig {
  std::vector<int> hidden = {75, 75, 75, 25};
  double dropout = 0.5;
  bool batch_norm_first = true;
  double actor_learning_rate = 1e-4;
  double critic_learning_rate = 1e-4;
  double tau = 1e-3;
  double gamma = 0.99;
  std::size_t batch_size = 128;
  std::size_t memory_size = 100000;
  std::size_t warmup = 1000;
  // Gradient steps taken per stored experience.
  int updates_per_experience = 1;
  // Exploring actions are uniform in [-1, 1] until the memory reaches warmup.
  bool random_warmup = true;
  // Actor loss term saturation_penalty * mean(max(0, |z| - saturation_bound)^2)
  // on the output pre-activation z, so tanh cannot saturate for good.
  double saturation_bound = 2.5;
  double saturation_penalty = 1.0;
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  double ou_dt = 1.0;
  // Upper clip applied to the error-ratio entries before they reach the networks.
  double ratio_clip = 10.0;
  std::uint64_t seed = 1;
};

struct TrainStats {
  double critic_loss = 0.0;
  double mean_q = 0.0;
};

class DdpgAgent : public Scheduler {
 public:
  DdpgAgent(const DdpgConfig& config, const IntervalLimits& limits);

  std::string_view name() const override { return "ddpg"; }
  Decision decide(const DecisionInput& input) override;
  void learn(const Experience& e) override;
  bool learns() const override { return true; }
  void set_exploration(bool explore) override { explore_ = explore; }

  // mu(s) (+ noise when exploring), clamped to [-1, 1].
  double act(const AgentStateVector& state, bool explore);
  void remember(const Experience& e) { memory_.push(e); }
  // One critic step, one actor step and target blending; nullopt when
  // the memory is below warmup or batch size.
  std::optional<TrainStats> train_step();

  nn::Network& actor() { return actor_; }
  nn::Network& critic() { return critic_; }
  nn::Network& actor_target() { return actor_target_; }
  nn::Network& critic_target() { return critic_target_; }
  const ReplayMemory& memory() const { return memory_; }
  OUNoise& noise() { return noise_; }
  const DdpgConfig& config() const { return config_; }
  void set_gamma(double gamma) { config_.gamma = gamma; }
  std::int64_t train_steps() const { return train_steps_; }

  Eigen::RowVectorXd encode(const AgentStateVector& state) const;

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  DdpgConfig config_;
  IntervalLimits limits_;
  Rng rng_;
  nn::Network actor_, critic_, actor_target_, critic_target_;
  nn::AdamState actor_opt_, critic_opt_;
  ReplayMemory memory_;
  OUNoise noise_;
  bool explore_ = true;
  std::int64_t train_steps_ = 0;
};

std::vector<nn::LayerSpec> ddpg_layers(int input_width, const DdpgConfig& config, nn::Activation output);

}  // namespace corrsched
