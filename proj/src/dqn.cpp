#include "corrsched/dqn.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "corrsched/binary_io.hpp"
#include "corrsched/error.hpp"

namespace corrsched {

namespace {
constexpr char kMagic[5] = "CSDQ";
constexpr std::uint32_t kVersion = 1;
constexpr auto kActions = static_cast<Eigen::Index>(kDqnActionSteps.size());
}  // namespace

Step apply_dqn_action(Step current_steps, int action_index, const IntervalLimits& limits) {
  require(action_index >= 0 && action_index < static_cast<int>(kDqnActionSteps.size()), ErrorKind::kInvalidInput,
          "DQN action index out of range");
  return std::clamp<Step>(current_steps + kDqnActionSteps[static_cast<std::size_t>(action_index)], 1,
                          limits.max_steps());
}

DqnAgent::DqnAgent(const DqnConfig& config, const IntervalLimits& limits)
    : config_(config), limits_(limits), rng_(config.seed), memory_(config.memory_size) {
  std::vector<nn::LayerSpec> layers;
  int width = static_cast<int>(kStateSize);
  for (int h : config.hidden) {
    layers.push_back(nn::LayerSpec{width, h, nn::Activation::kRelu, 0.0, false});
    width = h;
  }
  layers.push_back(nn::LayerSpec{width, static_cast<int>(kActions), nn::Activation::kIdentity, 0.0, false});
  Rng init(rng_.fork_seed());
  net_ = nn::Network(layers, init);
  target_ = net_;
  opt_ = nn::AdamState::for_size(net_.parameters().size(), config.learning_rate);
}

Eigen::RowVectorXd DqnAgent::encode(const AgentStateVector& state) const {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(kStateSize));
  for (std::size_t i = 0; i < kStateSize; ++i) row(static_cast<Eigen::Index>(i)) = state[i];
  row(2) = std::min(row(2), config_.ratio_clip);
  row(5) = std::min(row(5), config_.ratio_clip);
  return row;
}

std::array<double, kDqnActionSteps.size()> DqnAgent::q_values(const AgentStateVector& state) {
  net_.set_training(false);
  const Eigen::MatrixXd q = net_.forward(encode(state));
  std::array<double, kDqnActionSteps.size()> out{};
  for (Eigen::Index a = 0; a < kActions; ++a) out[static_cast<std::size_t>(a)] = q(0, a);
  return out;
}

int DqnAgent::act(const AgentStateVector& state, bool explore) {
  if (explore && rng_.bernoulli(config_.explore_rate)) return static_cast<int>(rng_.below(kDqnActionSteps.size()));
  const auto q = q_values(state);
  int best = 0;
  for (int a = 1; a < static_cast<int>(q.size()); ++a)
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  return best;
}

Decision DqnAgent::decide(const DecisionInput& input) {
  Decision d;
  d.action_index = act(input.state, explore_);
  d.action = static_cast<double>(kDqnActionSteps[static_cast<std::size_t>(d.action_index)]);
  d.interval_steps = apply_dqn_action(input.current_interval, d.action_index, limits_);
  return d;
}

void DqnAgent::learn(const Experience& e) {
  remember(e);
  train_step();
}

std::optional<TrainStats> DqnAgent::train_step() {
  const std::size_t m = config_.batch_size;
  if (memory_.size() < std::max(config_.warmup, m)) return std::nullopt;
  const auto batch = memory_.sample(m, rng_);
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ns = static_cast<Eigen::Index>(kStateSize);

  Eigen::MatrixXd states(mi, ns), next_states(mi, ns);
  for (Eigen::Index i = 0; i < mi; ++i) {
    states.row(i) = encode(batch[static_cast<std::size_t>(i)]->state);
    next_states.row(i) = encode(batch[static_cast<std::size_t>(i)]->next_state);
  }
  target_.set_training(false);
  const Eigen::VectorXd next_max = target_.forward(next_states).rowwise().maxCoeff();

  net_.set_training(true);
  const Eigen::MatrixXd q = net_.forward(states);
  Eigen::MatrixXd up = Eigen::MatrixXd::Zero(mi, kActions);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < mi; ++i) {
    const auto& e = *batch[static_cast<std::size_t>(i)];
    require(e.action_index >= 0 && e.action_index < kActions, ErrorKind::kInvalidState,
            "experience without a discrete action in DQN memory");
    const double target = e.reward + config_.gamma * next_max(i);
    const double diff = q(i, e.action_index) - target;
    loss += diff * diff;
    up(i, e.action_index) = 2.0 * diff / static_cast<double>(m);
  }
  const auto grads = net_.backward(up);
  nn::adam_step(net_.parameters(), grads.params, opt_);
  net_.set_training(false);
  nn::soft_update(target_, net_, config_.tau);
  return TrainStats{loss / static_cast<double>(m), q.mean()};
}

void DqnAgent::save(std::ostream& out) const {
  binio::put_magic(out, kMagic);
  binio::put_uint<std::uint32_t>(out, kVersion);
  net_.save(out);
  target_.save(out);
  opt_.save(out);
}

void DqnAgent::load(std::istream& in) {
  binio::expect_magic(in, kMagic, "DQN checkpoint");
  require(binio::get_uint<std::uint32_t>(in) == kVersion, ErrorKind::kSchema, "unsupported DQN checkpoint version");
  auto net = nn::Network::load(in);
  auto target = nn::Network::load(in);
  require(net.same_architecture(net_), ErrorKind::kSchema, "checkpoint architecture does not match the DQN network");
  net_ = std::move(net);
  target_ = std::move(target);
  opt_ = nn::AdamState::load(in);
}

}  // namespace corrsched
