#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "corrsched/covariance.hpp"
#include "corrsched/data.hpp"
#include "corrsched/error.hpp"
#include "corrsched/rng.hpp"

using namespace corrsched;

namespace {

ObservationWindow dense_window(const DatasetFrame& frame, Step steps) {
  ObservationWindow w(steps);
  for (Step k = 0; k < steps; ++k)
    for (std::size_t s = 0; s < frame.sensors(); ++s) w.push({frame.sensor_ids[s], k, frame.value(k, s)});
  return w;
}

std::map<int, Position> position_map(const DatasetFrame& frame) {
  std::map<int, Position> out;
  for (std::size_t s = 0; s < frame.sensors(); ++s) out[frame.sensor_ids[s]] = frame.positions[s];
  return out;
}

double relative_error(double got, double want) { return std::abs(got - want) / want; }

}  // namespace

TEST_CASE("covariance examples") {
  CHECK(covariance({0.3, 7.0, 1.0}, 0.0, 0.0) == 1.0);
  CHECK(covariance({0.001, 0.1, 1.0}, 10.0, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(covariance({0.001, 0.1, 1.0}, 5.0, 500.0) == doctest::Approx(0.36788).epsilon(1e-5));
  CHECK_THROWS_AS(covariance({0.001, 0.1, 1.0}, -1.0, 0.0), Error);
  CHECK_THROWS_AS(covariance({0.001, 0.1, 1.0}, 0.0, -1.0), Error);
}

TEST_CASE("covariance is separable, bounded and monotone") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const CovarianceModel m{rng.uniform(0.0, 0.01), rng.uniform(0.0, 0.5), 1.0};
    const double d = rng.uniform(0.0, 60.0);
    const double dt = rng.uniform(0.0, 3000.0);
    const double c = covariance(m, d, dt);
    CHECK(c > 0.0);
    CHECK(c <= 1.0);
    CHECK(c == doctest::Approx(covariance(m, d, 0.0) * covariance(m, 0.0, dt)).epsilon(1e-13));
    CHECK(covariance(m, d + 1.0, dt) <= c);
    CHECK(covariance(m, d, dt + 10.0) <= c);
  }
}

TEST_CASE("observation window evicts old entries and keeps order") {
  ObservationWindow w(10);
  for (Step k = 0; k < 25; ++k) w.push({1, k, static_cast<double>(k)});
  CHECK(w.entries().front().step >= 15);
  CHECK(w.entries().back().step == 24);
  for (std::size_t i = 1; i < w.size(); ++i) CHECK(w.entries()[i - 1].step <= w.entries()[i].step);
  CHECK_THROWS_AS(w.push({1, 3, 0.0}), Error);
}

TEST_CASE("extraction recovers known decay rates from a day of data") {
  SyntheticSpec spec;
  spec.theta_time = 0.002;
  spec.theta_space = 0.05;
  spec.steps = 8640;
  spec.seed = 3;
  const auto frame = generate_synthetic(spec);
  const auto fit = extract_scaling_parameters(dense_window(frame, spec.steps), position_map(frame), {});
  REQUIRE(fit.theta_time);
  REQUIRE(fit.theta_space);
  CHECK(relative_error(*fit.theta_time, 0.002) < 0.25);
  CHECK(relative_error(*fit.theta_space, 0.05) < 0.25);
}

TEST_CASE("extraction error shrinks with window size") {
  double small_err = 0.0, large_err = 0.0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    SyntheticSpec spec;
    spec.steps = 4320;
    spec.seed = 100 + static_cast<std::uint64_t>(seed);
    const auto frame = generate_synthetic(spec);
    const auto positions = position_map(frame);
    const auto small = extract_scaling_parameters(dense_window(frame, 540), positions, {});
    const auto large = extract_scaling_parameters(dense_window(frame, 4320), positions, {});
    REQUIRE(small.theta_time);
    REQUIRE(large.theta_time);
    small_err += relative_error(*small.theta_time, spec.theta_time);
    large_err += relative_error(*large.theta_time, spec.theta_time);
    if (small.theta_space) small_err += relative_error(*small.theta_space, spec.theta_space);
    else small_err += 1.0;
    if (large.theta_space) large_err += relative_error(*large.theta_space, spec.theta_space);
    else large_err += 1.0;
  }
  MESSAGE("mean relative error small=" << small_err / seeds << " large=" << large_err / seeds);
  CHECK(large_err <= small_err);
}

TEST_CASE("extraction ignores ordering within a step") {
  SyntheticSpec spec;
  spec.steps = 600;
  spec.seed = 9;
  const auto frame = generate_synthetic(spec);
  ObservationWindow forward(600), backward(600);
  for (Step k = 0; k < spec.steps; ++k) {
    for (std::size_t s = 0; s < frame.sensors(); ++s) forward.push({frame.sensor_ids[s], k, frame.value(k, s)});
    for (std::size_t s = frame.sensors(); s-- > 0;) backward.push({frame.sensor_ids[s], k, frame.value(k, s)});
  }
  const auto a = extract_scaling_parameters(forward, position_map(frame), {});
  const auto b = extract_scaling_parameters(backward, position_map(frame), {});
  REQUIRE(a.theta_time);
  REQUIRE(a.theta_space);
  CHECK(*a.theta_time == doctest::Approx(*b.theta_time).epsilon(1e-12));
  CHECK(*a.theta_space == doctest::Approx(*b.theta_space).epsilon(1e-12));
}

TEST_CASE("single sensor gives a time fit only") {
  SyntheticSpec spec;
  spec.sensors = 1;
  spec.steps = 2000;
  const auto frame = generate_synthetic(spec);
  const auto fit = extract_scaling_parameters(dense_window(frame, spec.steps), position_map(frame), {});
  CHECK(fit.theta_time.has_value());
  CHECK_FALSE(fit.theta_space.has_value());
}

TEST_CASE("constant observations give no fit") {
  ObservationWindow w(500);
  std::map<int, Position> positions{{1, {0, 0}}, {2, {5, 0}}, {3, {0, 8}}};
  for (Step k = 0; k < 500; ++k)
    for (int id = 1; id <= 3; ++id) w.push({id, k, 4.0});
  const auto fit = extract_scaling_parameters(w, positions, {});
  CHECK(fit.empty());
  const CovarianceModel prior{0.002, 0.05, 1.0};
  const auto kept = refit(prior, fit);
  CHECK(kept.theta_time == prior.theta_time);
  CHECK(kept.theta_space == prior.theta_space);
}

TEST_CASE("fitted rates are never negative") {
  Rng rng(5);
  ObservationWindow w(400);
  std::map<int, Position> positions{{1, {0, 0}}, {2, {30, 0}}, {3, {0, 25}}};
  for (Step k = 0; k < 400; ++k)
    for (int id = 1; id <= 3; ++id) w.push({id, k, rng.normal()});
  const auto fit = extract_scaling_parameters(w, positions, {});
  if (fit.theta_time) CHECK(*fit.theta_time >= 0.0);
  if (fit.theta_space) CHECK(*fit.theta_space >= 0.0);
}

TEST_CASE("normalization") {
  const NormalizationStats stats{20.0, 4.0};
  CHECK(stats.normalize(20.0) == 0.0);
  CHECK(stats.normalize(24.0) == doctest::Approx(2.0));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-1e3, 1e3);
    CHECK(std::abs(stats.denormalize(stats.normalize(x)) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
  }
  const std::vector<Observation> raw = {{1, 0, 24.0}, {2, 0, 16.0}};
  const auto z = normalize_observations(raw, stats);
  CHECK(z[0].value == doctest::Approx(2.0));
  CHECK(z[1].value == doctest::Approx(-2.0));
  CHECK_THROWS_AS(normalize_observations(raw, NormalizationStats{0.0, 0.0}), Error);

  const std::vector<double> values = {1.0, 2.0, 3.0, 4.0};
  const auto s = compute_stats(values);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.variance == doctest::Approx(5.0 / 3.0));
}
