#include "corrsched/agent.hpp"

#include <algorithm>
#include <cmath>

#include "corrsched/error.hpp"

namespace corrsched {

ReplayMemory::ReplayMemory(std::size_t capacity) : buffer_(capacity) {
  require(capacity > 0, ErrorKind::kInvalidConfig, "replay memory capacity must be positive");
}

void ReplayMemory::push(const Experience& e) {
  buffer_[head_] = e;
  head_ = (head_ + 1) % buffer_.size();
  size_ = std::min(size_ + 1, buffer_.size());
}

const Experience& ReplayMemory::at(std::size_t i) const {
  require(i < size_, ErrorKind::kInvalidInput, "replay index out of range");
  const std::size_t oldest = (head_ + buffer_.size() - size_) % buffer_.size();
  return buffer_[(oldest + i) % buffer_.size()];
}

std::vector<const Experience*> ReplayMemory::sample(std::size_t batch, Rng& rng) const {
  require(batch <= size_, ErrorKind::kInvalidState, "not enough experiences to sample a batch");
  // Floyd's algorithm: distinct indices without materializing a permutation.
  std::vector<std::size_t> picked;
  picked.reserve(batch);
  for (std::size_t j = size_ - batch; j < size_; ++j) {
    const auto t = static_cast<std::size_t>(rng.below(j + 1));
    if (std::find(picked.begin(), picked.end(), t) == picked.end())
      picked.push_back(t);
    else
      picked.push_back(j);
  }
  std::vector<const Experience*> out;
  out.reserve(batch);
  for (auto i : picked) out.push_back(&at(i));
  return out;
}

double OUNoise::sample(Rng& rng) {
  value_ += theta_ * (mean_ - value_) * dt_ + sigma_ * std::sqrt(dt_) * rng.normal();
  return value_;
}

double round_half_away(double x) { return std::round(x); }

Step IntervalLimits::max_steps() const {
  return std::max<Step>(1, static_cast<Step>(std::floor(max_interval_seconds / step_seconds + 1e-9)));
}

Step map_action_to_interval(Step current_steps, double action, const IntervalLimits& limits) {
  require(current_steps >= 1, ErrorKind::kInvalidInput, "current interval must be at least one step");
  const double a = std::clamp(action, -1.0, 1.0);
  const auto change = static_cast<Step>(round_half_away(limits.max_change_seconds * a / limits.step_seconds));
  return std::clamp<Step>(current_steps + change, 1, limits.max_steps());
}

}  // namespace corrsched
