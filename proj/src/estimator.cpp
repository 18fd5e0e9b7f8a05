#include "corrsched/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corrsched/error.hpp"

namespace corrsched {

CovarianceSystem build_covariance_matrices(const EstimationQuery& query, const CovarianceModel& model) {
  CovarianceSystem sys;
  for (int i = 0; i < static_cast<int>(query.sensors.size()); ++i)
    if (query.sensors[i].has_observation) sys.used.push_back(i);
  require(!sys.used.empty(), ErrorKind::kInvalidInput, "estimation needs at least one received observation");

  const auto n = static_cast<Eigen::Index>(sys.used.size());
  std::vector<double> ages(sys.used.size());
  for (std::size_t j = 0; j < sys.used.size(); ++j)
    ages[j] = static_cast<double>(age_of_information(query.sensors[sys.used[j]], query.now)) *
              query.now.step_seconds;

  sys.observations.resize(n, n);
  sys.target.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& sj = query.sensors[sys.used[j]];
    sys.observations(j, j) = 1.0;
    for (Eigen::Index k = j + 1; k < n; ++k) {
      const auto& sk = query.sensors[sys.used[k]];
      const double c = covariance(model, distance(sj.position, sk.position), std::abs(ages[j] - ages[k]));
      sys.observations(j, k) = c;
      sys.observations(k, j) = c;
    }
    sys.target(j) = covariance(model, distance(sj.position, query.target), ages[j]);
  }
  return sys;
}

CovarianceFactor::CovarianceFactor(const Eigen::MatrixXd& covariance) : size_(covariance.rows()) {
  require(covariance.rows() == covariance.cols(), ErrorKind::kInvalidInput, "covariance must be square");
  llt_.compute(covariance);
  if (llt_.info() == Eigen::Success && llt_.rcond() >= kMinReciprocalCondition) return;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(size_, size_);
  for (double nugget = kNuggetStart; nugget <= kNuggetMax * (1.0 + 1e-9); nugget *= 10.0) {
    llt_.compute(covariance + nugget * identity);
    if (llt_.info() == Eigen::Success && llt_.rcond() >= kMinReciprocalCondition) {
      nugget_ = nugget;
      return;
    }
  }
  fail(ErrorKind::kSingularSystem, "covariance matrix is singular after nugget escalation");
}

WeightSolution lmmse_weights(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& target) {
  require(covariance.rows() == target.size(), ErrorKind::kInvalidInput,
          "covariance and target vector dimensions differ");
  const CovarianceFactor factor(covariance);
  return WeightSolution{factor.solve(target), factor.nugget()};
}

EstimationReport estimate(const EstimationQuery& query, const CovarianceModel& model) {
  const auto sys = build_covariance_matrices(query, model);
  const auto solution = lmmse_weights(sys.observations, sys.target);

  EstimationReport report;
  report.weights = solution.weights;
  report.location = query.target;
  report.step = query.now.step_index;
  for (std::size_t j = 0; j < sys.used.size(); ++j)
    report.estimate += solution.weights(static_cast<Eigen::Index>(j)) * query.sensors[sys.used[j]].last_value;
  const double mse = model.process_variance - sys.target.dot(solution.weights);
  report.mse = std::clamp(mse, 0.0, model.process_variance);
  return report;
}

void FieldEstimator::rebuild(std::span<const SensorState> sensors, const CovarianceModel& model,
                             double step_seconds) {
  model_ = model;
  step_seconds_ = step_seconds;
  positions_.clear();
  tx_steps_.clear();
  used_.clear();
  for (int i = 0; i < static_cast<int>(sensors.size()); ++i) {
    if (!sensors[i].has_observation) continue;
    used_.push_back(i);
    positions_.push_back(sensors[i].position);
    tx_steps_.push_back(sensors[i].last_tx_step);
  }
  factor_.reset();
  if (used_.empty()) return;

  const auto n = static_cast<Eigen::Index>(used_.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    c(j, j) = 1.0;
    for (Eigen::Index k = j + 1; k < n; ++k) {
      const double dt = static_cast<double>(std::abs(tx_steps_[j] - tx_steps_[k])) * step_seconds_;
      const double v = covariance(model_, distance(positions_[j], positions_[k]), dt);
      c(j, k) = v;
      c(k, j) = v;
    }
  }
  factor_.emplace(c);
}

std::vector<double> FieldEstimator::mse_at(std::span<const Position> targets, Step now) const {
  std::vector<double> out(targets.size(), model_.process_variance);
  if (!factor_ || targets.empty()) return out;

  const auto n = static_cast<Eigen::Index>(used_.size());
  const auto m = static_cast<Eigen::Index>(targets.size());
  Eigen::MatrixXd rhs(n, m);
  for (Eigen::Index j = 0; j < n; ++j) {
    require(now >= tx_steps_[j], ErrorKind::kInvalidInput, "clock precedes an observation");
    const double age = static_cast<double>(now - tx_steps_[j]) * step_seconds_;
    for (Eigen::Index i = 0; i < m; ++i) rhs(j, i) = covariance(model_, distance(positions_[j], targets[i]), age);
  }
  const Eigen::MatrixXd weights = factor_->solve(rhs);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double mse = model_.process_variance - rhs.col(i).dot(weights.col(i));
    out[i] = std::clamp(mse, 0.0, model_.process_variance);
  }
  return out;
}

AverageErrorTracker::AverageErrorTracker(std::size_t sensors) : slots_(sensors) {}

void AverageErrorTracker::record(std::size_t sensor, double mse) {
  auto& slot = slots_.at(sensor);
  slot.sum += mse;
  ++slot.count;
}

double AverageErrorTracker::average(std::size_t sensor) const {
  const auto& slot = slots_.at(sensor);
  require(slot.count > 0, ErrorKind::kInvalidState,
          "no error samples recorded for sensor slot " + std::to_string(sensor));
  return slot.sum / static_cast<double>(slot.count);
}

WindowSummary AverageErrorTracker::close(std::size_t sensor) {
  const double avg = average(sensor);
  auto& slot = slots_.at(sensor);
  WindowSummary summary{avg, slot.previous ? avg - *slot.previous : 0.0, slot.count};
  slot.previous = avg;
  slot.sum = 0.0;
  slot.count = 0;
  return summary;
}

}  // namespace corrsched
