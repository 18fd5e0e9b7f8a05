#include "corrsched/ddpg.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "corrsched/binary_io.hpp"
#include "corrsched/error.hpp"

namespace corrsched {

namespace {
constexpr char kMagic[5] = "CSDG";
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::vector<nn::LayerSpec> ddpg_layers(int input_width, const DdpgConfig& config, nn::Activation output) {
  std::vector<nn::LayerSpec> layers;
  int width = input_width;
  for (std::size_t i = 0; i < config.hidden.size(); ++i) {
    nn::LayerSpec spec;
    spec.input_width = width;
    spec.output_width = config.hidden[i];
    spec.activation = nn::Activation::kRelu;
    spec.batch_norm = i == 0 && config.batch_norm_first;
    // Dropout sits between hidden layers only.
    spec.dropout_rate = i + 1 < config.hidden.size() ? config.dropout : 0.0;
    layers.push_back(spec);
    width = config.hidden[i];
  }
  layers.push_back(nn::LayerSpec{width, 1, output, 0.0, false});
  return layers;
}

DdpgAgent::DdpgAgent(const DdpgConfig& config, const IntervalLimits& limits)
    : config_(config), limits_(limits), rng_(config.seed), memory_(config.memory_size),
      noise_(config.ou_theta, config.ou_sigma, config.ou_dt) {
  require(config.batch_size > 0 && config.tau >= 0.0 && config.tau <= 1.0 && config.updates_per_experience >= 1 &&
              config.saturation_bound >= 0.0 && config.saturation_penalty >= 0.0,
          ErrorKind::kInvalidConfig,
          "invalid DDPG hyperparameters");
  Rng init(rng_.fork_seed());
  actor_ = nn::Network(ddpg_layers(static_cast<int>(kStateSize), config, nn::Activation::kTanh), init);
  critic_ = nn::Network(ddpg_layers(static_cast<int>(kStateSize) + 1, config, nn::Activation::kIdentity), init);
  actor_target_ = actor_;
  critic_target_ = critic_;
  actor_.seed_dropout(rng_.fork_seed());
  critic_.seed_dropout(rng_.fork_seed());
  actor_opt_ = nn::AdamState::for_size(actor_.parameters().size(), config.actor_learning_rate);
  critic_opt_ = nn::AdamState::for_size(critic_.parameters().size(), config.critic_learning_rate);
}

Eigen::RowVectorXd DdpgAgent::encode(const AgentStateVector& state) const {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(kStateSize));
  for (std::size_t i = 0; i < kStateSize; ++i) row(static_cast<Eigen::Index>(i)) = state[i];
  row(2) = std::min(row(2), config_.ratio_clip);
  row(5) = std::min(row(5), config_.ratio_clip);
  return row;
}

double DdpgAgent::act(const AgentStateVector& state, bool explore) {
  actor_.set_training(false);
  const double mu = actor_.forward(encode(state))(0, 0);
  if (!explore) return mu;
  if (config_.random_warmup && memory_.size() < std::max(config_.warmup, config_.batch_size))
    return rng_.uniform(-1.0, 1.0);
  return std::clamp(mu + noise_.sample(rng_), -1.0, 1.0);
}

Decision DdpgAgent::decide(const DecisionInput& input) {
  Decision d;
  d.action = act(input.state, explore_);
  d.interval_steps = map_action_to_interval(input.current_interval, d.action, limits_);
  return d;
}

void DdpgAgent::learn(const Experience& e) {
  remember(e);
  for (int i = 0; i < config_.updates_per_experience; ++i) train_step();
}

std::optional<TrainStats> DdpgAgent::train_step() {
  const std::size_t m = config_.batch_size;
  if (memory_.size() < std::max(config_.warmup, m)) return std::nullopt;
  const auto batch = memory_.sample(m, rng_);
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ns = static_cast<Eigen::Index>(kStateSize);

  Eigen::MatrixXd states(mi, ns), next_states(mi, ns), state_actions(mi, ns + 1);
  Eigen::VectorXd rewards(mi);
  for (Eigen::Index i = 0; i < mi; ++i) {
    const auto& e = *batch[static_cast<std::size_t>(i)];
    states.row(i) = encode(e.state);
    next_states.row(i) = encode(e.next_state);
    state_actions.row(i).head(ns) = states.row(i);
    state_actions(i, ns) = e.action;
    rewards(i) = e.reward;
  }

  // Targets from the slow-moving networks.
  actor_target_.set_training(false);
  critic_target_.set_training(false);
  Eigen::MatrixXd next_sa(mi, ns + 1);
  next_sa.leftCols(ns) = next_states;
  next_sa.col(ns) = actor_target_.forward(next_states).col(0);
  const Eigen::VectorXd targets = rewards + config_.gamma * critic_target_.forward(next_sa).col(0);

  // Critic regression onto the targets.
  critic_.set_training(true);
  const Eigen::VectorXd q = critic_.forward(state_actions).col(0);
  const Eigen::VectorXd diff = q - targets;
  TrainStats stats{diff.squaredNorm() / static_cast<double>(m), q.mean()};
  const Eigen::MatrixXd dq = (2.0 / static_cast<double>(m)) * diff;
  auto critic_grads = critic_.backward(dq);
  nn::adam_step(critic_.parameters(), critic_grads.params, critic_opt_);

  // Actor ascends Q(s, mu(s)); the critic is evaluated deterministically here.
  actor_.set_training(true);
  const Eigen::MatrixXd mu = actor_.forward(states);
  Eigen::MatrixXd sa(mi, ns + 1);
  sa.leftCols(ns) = states;
  sa.col(ns) = mu.col(0);
  critic_.set_training(false);
  critic_.forward(sa);
  const Eigen::MatrixXd up = Eigen::MatrixXd::Constant(mi, 1, -1.0 / static_cast<double>(m));
  const auto through_critic = critic_.backward(up);
  const Eigen::MatrixXd dmu = through_critic.input.col(ns);
  const Eigen::MatrixXd& z = actor_.pre_activation(actor_.layers().size() - 1);
  const Eigen::MatrixXd excess = (z.array().abs() - config_.saturation_bound).max(0.0).matrix();
  const Eigen::MatrixXd dz =
      (2.0 * config_.saturation_penalty / static_cast<double>(m)) * (excess.array() * z.array().sign()).matrix();
  const auto actor_grads = actor_.backward(dmu, dz);
  nn::adam_step(actor_.parameters(), actor_grads.params, actor_opt_);
  actor_.set_training(false);

  nn::soft_update(critic_target_, critic_, config_.tau);
  nn::soft_update(actor_target_, actor_, config_.tau);
  ++train_steps_;
  return stats;
}

void DdpgAgent::save(std::ostream& out) const {
  binio::put_magic(out, kMagic);
  binio::put_uint<std::uint32_t>(out, kVersion);
  binio::put_i64(out, train_steps_);
  actor_.save(out);
  critic_.save(out);
  actor_target_.save(out);
  critic_target_.save(out);
  actor_opt_.save(out);
  critic_opt_.save(out);
  binio::put_f64(out, noise_.value());
}

void DdpgAgent::load(std::istream& in) {
  binio::expect_magic(in, kMagic, "DDPG checkpoint");
  require(binio::get_uint<std::uint32_t>(in) == kVersion, ErrorKind::kSchema, "unsupported DDPG checkpoint version");
  train_steps_ = binio::get_i64(in);
  auto actor = nn::Network::load(in);
  auto critic = nn::Network::load(in);
  auto actor_target = nn::Network::load(in);
  auto critic_target = nn::Network::load(in);
  require(actor.same_architecture(actor_) && critic.same_architecture(critic_), ErrorKind::kSchema,
          "checkpoint architecture does not match the configured DDPG networks");
  actor_ = std::move(actor);
  critic_ = std::move(critic);
  actor_target_ = std::move(actor_target);
  critic_target_ = std::move(critic_target);
  actor_opt_ = nn::AdamState::load(in);
  critic_opt_ = nn::AdamState::load(in);
  noise_.set_value(binio::get_f64(in));
  actor_.seed_dropout(rng_.fork_seed());
  critic_.seed_dropout(rng_.fork_seed());
}

}  // namespace corrsched
