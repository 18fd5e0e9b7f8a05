#pragma once

// Separable exponential space-time covariance and online extraction of
// its two decay rates from the observations the gateway has collected.

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "corrsched/sensors.hpp"

namespace corrsched {

struct CovarianceModel {
  double theta_time = 0.0;   // per second
  double theta_space = 0.0;  // per meter
  double process_variance = 1.0;
};

// exp(-theta_space * d - theta_time * dt); correlation form, 1 at the origin.
double covariance(const CovarianceModel& model, double distance_m, double age_diff_s);

struct Observation {
  int sensor = 0;
  Step step = 0;
  double value = 0.0;
};

// Time-ordered buffer of received observations covering the most recent
// `capacity_steps` steps.
class ObservationWindow {
 public:
  explicit ObservationWindow(Step capacity_steps) : capacity_steps_(capacity_steps) {}

  // Entries must arrive in non-decreasing step order.
  void push(const Observation& obs);
  void clear() { entries_.clear(); }

  Step capacity_steps() const { return capacity_steps_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<Observation>& entries() const { return entries_; }

 private:
  Step capacity_steps_;
  std::deque<Observation> entries_;
};

struct ExtractionOptions {
  double step_seconds = 10.0;
  // Stride of the hold-forward grid used to time-align sensors.
  Step grid_steps = 1;
  // Autocorrelation lags are binned in units of lag_steps, bins 1..max_lag_bins.
  Step lag_steps = 1;
  int max_lag_bins = 30;
  double distance_bucket_m = 5.0;
  double min_correlation = 0.05;
  // Minimum number of aligned samples for a pairwise/lag correlation.
  std::size_t min_overlap = 20;
  // Minimum usable (bucket or lag) points for each regression.
  std::size_t min_points = 1;
};

// Either parameter may be missing when the window lacks the data to fit it.
struct ScalingFit {
  std::optional<double> theta_time;
  std::optional<double> theta_space;

  bool empty() const { return !theta_time && !theta_space; }
};

ScalingFit extract_scaling_parameters(const ObservationWindow& window,
                                      const std::map<int, Position>& positions,
                                      const ExtractionOptions& options);

// Applies a fit on top of `prior`, keeping prior values where the fit
// had insufficient data.
CovarianceModel refit(const CovarianceModel& prior, const ScalingFit& fit);

struct NormalizationStats {
  double mean = 0.0;
  double variance = 1.0;

  double stddev() const;
  double normalize(double value) const;
  double denormalize(double z) const;
};

NormalizationStats compute_stats(std::span<const double> values);

std::vector<Observation> normalize_observations(std::span<const Observation> raw,
                                                const NormalizationStats& stats);

}  // namespace corrsched
