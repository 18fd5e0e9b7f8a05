#pragma once

// LMMSE estimation of the field from stale observations and the analytic
// MSE that scores how fresh the collected information is.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "corrsched/covariance.hpp"
#include "corrsched/sensors.hpp"

namespace corrsched {

struct EstimationQuery {
  Position target;
  SimClock now;
  std::span<const SensorState> sensors;  // only those with an observation are used
};

struct CovarianceSystem {
  Eigen::MatrixXd observations;  // C_YY
  Eigen::VectorXd target;        // c_iYZ
  std::vector<int> used;         // indices into the query's sensors
};

CovarianceSystem build_covariance_matrices(const EstimationQuery& query, const CovarianceModel& model);

// Diagonal loading schedule for singular systems: first attempt is
// unregularized, then 1e-6 escalating by x10 up to 1e-2.
inline constexpr double kNuggetStart = 1e-6;
inline constexpr double kNuggetMax = 1e-2;
inline constexpr double kMinReciprocalCondition = 1e-12;

struct WeightSolution {
  Eigen::VectorXd weights;
  double nugget = 0.0;
};

// Factorization of C_YY with the nugget that made it solvable.
class CovarianceFactor {
 public:
  explicit CovarianceFactor(const Eigen::MatrixXd& covariance);

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }
  double nugget() const { return nugget_; }
  Eigen::Index size() const { return size_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double nugget_ = 0.0;
  Eigen::Index size_ = 0;
};

WeightSolution lmmse_weights(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& target);

struct EstimationReport {
  Eigen::VectorXd weights;
  double estimate = 0.0;
  double mse = 0.0;
  Position location;
  Step step = 0;
};

EstimationReport estimate(const EstimationQuery& query, const CovarianceModel& model);

// Analytic MSE at many locations for one set of observations. The
// factorization depends only on which observations are held and when they
// were generated, so it is reused across steps until rebuild().
class FieldEstimator {
 public:
  void rebuild(std::span<const SensorState> sensors, const CovarianceModel& model, double step_seconds);

  // MSE at each target for the current clock; sigma^2 where nothing is known.
  std::vector<double> mse_at(std::span<const Position> targets, Step now) const;

  bool has_observations() const { return !used_.empty(); }

 private:
  CovarianceModel model_;
  double step_seconds_ = 10.0;
  std::vector<Position> positions_;
  std::vector<Step> tx_steps_;
  std::vector<int> used_;
  std::optional<CovarianceFactor> factor_;
};

struct WindowSummary {
  double average = 0.0;  // mean MSE over the closed window
  double delta = 0.0;    // change against the previous window (0 for the first)
  long samples = 0;
};

// Average MSE at each sensor's location between its consecutive
// transmissions.
class AverageErrorTracker {
 public:
  explicit AverageErrorTracker(std::size_t sensors = 0);

  void record(std::size_t sensor, double mse);
  double average(std::size_t sensor) const;
  long samples(std::size_t sensor) const { return slots_.at(sensor).count; }
  std::optional<double> previous_average(std::size_t sensor) const { return slots_.at(sensor).previous; }

  // Ends the sensor's window on a transmission and starts a new one.
  WindowSummary close(std::size_t sensor);
  // Drops the closed-window history so the next close reports delta 0.
  void forget_previous(std::size_t sensor) { slots_.at(sensor).previous.reset(); }

  std::size_t size() const { return slots_.size(); }

 private:
  struct Slot {
    double sum = 0.0;
    long count = 0;
    std::optional<double> previous;
  };
  std::vector<Slot> slots_;
};

}  // namespace corrsched
