#include "corrsched/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "corrsched/error.hpp"

namespace corrsched {

double covariance(const CovarianceModel& model, double distance_m, double age_diff_s) {
  require(distance_m >= 0.0 && age_diff_s >= 0.0, ErrorKind::kInvalidInput,
          "covariance arguments must be non-negative");
  return std::exp(-model.theta_space * distance_m - model.theta_time * age_diff_s);
}

void ObservationWindow::push(const Observation& obs) {
  require(entries_.empty() || obs.step >= entries_.back().step, ErrorKind::kInvalidInput,
          "observations must be pushed in time order");
  entries_.push_back(obs);
  const Step oldest = obs.step - capacity_steps_;
  while (!entries_.empty() && entries_.front().step <= oldest) entries_.pop_front();
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Series {
  int sensor = 0;
  std::vector<Step> steps;
  std::vector<double> values;
};

// Canonical per-sensor series; duplicates at one step keep the largest
// value so that the result does not depend on arrival order.
std::vector<Series> group_by_sensor(const ObservationWindow& window) {
  std::vector<Observation> obs(window.entries().begin(), window.entries().end());
  std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
    if (a.sensor != b.sensor) return a.sensor < b.sensor;
    if (a.step != b.step) return a.step < b.step;
    return a.value < b.value;
  });
  std::vector<Series> out;
  for (const auto& o : obs) {
    if (out.empty() || out.back().sensor != o.sensor) out.push_back(Series{o.sensor, {}, {}});
    auto& s = out.back();
    if (!s.steps.empty() && s.steps.back() == o.step) {
      s.values.back() = o.value;
    } else {
      s.steps.push_back(o.step);
      s.values.push_back(o.value);
    }
  }
  return out;
}

// Sample Pearson correlation; nullopt when either side has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 1e-14 * static_cast<double>(n) || sbb <= 1e-14 * static_cast<double>(n)) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

// Least squares through the origin of -ln(rho) against x.
std::optional<double> fit_decay(const std::vector<double>& xs, const std::vector<double>& rhos,
                                const ExtractionOptions& options) {
  double sxy = 0.0, sxx = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(rhos[i] > options.min_correlation)) continue;
    const double y = -std::log(std::min(rhos[i], 1.0));
    sxy += xs[i] * y;
    sxx += xs[i] * xs[i];
    ++used;
  }
  if (used < std::max<std::size_t>(options.min_points, 1) || sxx <= 0.0) return std::nullopt;
  return std::max(0.0, sxy / sxx);
}

std::optional<double> fit_time(const std::vector<Series>& series, const ExtractionOptions& options) {
  const int bins = options.max_lag_bins;
  const double lag = static_cast<double>(options.lag_steps);
  std::vector<double> rho_sum(bins + 1, 0.0), weight(bins + 1, 0.0), gap_sum(bins + 1, 0.0);
  std::vector<std::vector<double>> lhs(bins + 1), rhs(bins + 1);
  std::vector<double> gaps(bins + 1);

  for (const auto& s : series) {
    for (auto& v : lhs) v.clear();
    for (auto& v : rhs) v.clear();
    std::fill(gaps.begin(), gaps.end(), 0.0);
    const std::size_t n = s.steps.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double gap = static_cast<double>(s.steps[j] - s.steps[i]);
        const auto bin = static_cast<long>(std::lround(gap / lag));
        if (bin > bins) break;
        if (bin < 1) continue;
        lhs[bin].push_back(s.values[i]);
        rhs[bin].push_back(s.values[j]);
        gaps[bin] += gap;
      }
    }
    for (int b = 1; b <= bins; ++b) {
      const std::size_t m = lhs[b].size();
      if (m < options.min_overlap) continue;
      const auto r = pearson(lhs[b], rhs[b]);
      if (!r) continue;
      rho_sum[b] += *r * static_cast<double>(m);
      weight[b] += static_cast<double>(m);
      gap_sum[b] += gaps[b];
    }
  }

  std::vector<double> xs, rhos;
  for (int b = 1; b <= bins; ++b) {
    if (weight[b] <= 0.0) continue;
    xs.push_back(gap_sum[b] / weight[b] * options.step_seconds);
    rhos.push_back(rho_sum[b] / weight[b]);
  }
  return fit_decay(xs, rhos, options);
}

std::optional<double> fit_space(const std::vector<Series>& series, const std::map<int, Position>& positions,
                                const ExtractionOptions& options) {
  std::vector<const Series*> located;
  for (const auto& s : series)
    if (positions.count(s.sensor)) located.push_back(&s);
  if (located.size() < 2) return std::nullopt;

  Step first = std::numeric_limits<Step>::max();
  Step last = std::numeric_limits<Step>::min();
  for (const auto* s : located) {
    first = std::min(first, s->steps.front());
    last = std::max(last, s->steps.back());
  }
  const Step stride = std::max<Step>(1, options.grid_steps);
  const auto points = static_cast<std::size_t>((last - first) / stride + 1);

  // Hold-forward each sensor onto the common grid.
  std::vector<std::vector<double>> held(located.size(), std::vector<double>(points, kNaN));
  for (std::size_t k = 0; k < located.size(); ++k) {
    const auto& s = *located[k];
    std::size_t idx = 0;
    double current = kNaN;
    for (std::size_t g = 0; g < points; ++g) {
      const Step t = first + static_cast<Step>(g) * stride;
      while (idx < s.steps.size() && s.steps[idx] <= t) current = s.values[idx++];
      held[k][g] = current;
    }
  }

  std::map<long, std::pair<double, double>> bucket_sums;  // bucket -> (sum rho, sum d)
  std::map<long, int> bucket_counts;
  std::vector<double> a, b;
  for (std::size_t i = 0; i < located.size(); ++i) {
    for (std::size_t j = i + 1; j < located.size(); ++j) {
      a.clear();
      b.clear();
      for (std::size_t g = 0; g < points; ++g) {
        if (std::isnan(held[i][g]) || std::isnan(held[j][g])) continue;
        a.push_back(held[i][g]);
        b.push_back(held[j][g]);
      }
      if (a.size() < options.min_overlap) continue;
      const auto r = pearson(a, b);
      if (!r) continue;
      const double d = distance(positions.at(located[i]->sensor), positions.at(located[j]->sensor));
      const long bucket = static_cast<long>(std::floor(d / options.distance_bucket_m));
      auto& sums = bucket_sums[bucket];
      sums.first += *r;
      sums.second += d;
      ++bucket_counts[bucket];
    }
  }

  std::vector<double> xs, rhos;
  for (const auto& [bucket, sums] : bucket_sums) {
    const double n = bucket_counts[bucket];
    xs.push_back(sums.second / n);
    rhos.push_back(sums.first / n);
  }
  return fit_decay(xs, rhos, options);
}

}  // namespace

ScalingFit extract_scaling_parameters(const ObservationWindow& window,
                                      const std::map<int, Position>& positions,
                                      const ExtractionOptions& options) {
  require(options.step_seconds > 0.0 && options.lag_steps >= 1 && options.max_lag_bins >= 1 &&
              options.distance_bucket_m > 0.0,
          ErrorKind::kInvalidConfig, "invalid extraction options");
  ScalingFit fit;
  if (window.empty()) return fit;
  const auto series = group_by_sensor(window);
  fit.theta_time = fit_time(series, options);
  fit.theta_space = fit_space(series, positions, options);
  return fit;
}

CovarianceModel refit(const CovarianceModel& prior, const ScalingFit& fit) {
  CovarianceModel out = prior;
  if (fit.theta_time) out.theta_time = *fit.theta_time;
  if (fit.theta_space) out.theta_space = *fit.theta_space;
  return out;
}

double NormalizationStats::stddev() const { return std::sqrt(variance); }

double NormalizationStats::normalize(double value) const {
  require(variance > 0.0, ErrorKind::kInvalidInput, "normalization variance must be positive");
  return (value - mean) / stddev();
}

double NormalizationStats::denormalize(double z) const { return mean + z * stddev(); }

NormalizationStats compute_stats(std::span<const double> values) {
  require(values.size() >= 2, ErrorKind::kInvalidInput, "need at least two values for statistics");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return NormalizationStats{mean, ss / static_cast<double>(values.size() - 1)};
}

std::vector<Observation> normalize_observations(std::span<const Observation> raw,
                                                const NormalizationStats& stats) {
  require(stats.variance > 0.0, ErrorKind::kInvalidInput, "normalization variance must be positive");
  std::vector<Observation> out;
  out.reserve(raw.size());
  for (const auto& o : raw) out.push_back({o.sensor, o.step, stats.normalize(o.value)});
  return out;
}

}  // namespace corrsched
