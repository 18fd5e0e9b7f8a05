#include <doctest.h>

#include <cmath>
#include <vector>

#include "corrsched/error.hpp"
#include "corrsched/estimator.hpp"
#include "corrsched/rng.hpp"
#include "oracles.hpp"

using namespace corrsched;

namespace {

SensorState observed(Position p, Step tx, double value = 0.0) {
  SensorState s;
  s.position = p;
  s.last_tx_step = tx;
  s.last_value = value;
  s.has_observation = true;
  return s;
}

}  // namespace

TEST_CASE("covariance matrices") {
  const CovarianceModel m{0.001, 0.1, 1.0};
  std::vector<SensorState> one = {observed({3, 4}, 10)};
  auto sys = build_covariance_matrices({{3, 4}, {10, 10.0}, one}, m);
  CHECK(sys.observations.rows() == 1);
  CHECK(sys.observations(0, 0) == 1.0);
  CHECK(sys.target(0) == 1.0);

  std::vector<SensorState> twins = {observed({1, 1}, 5), observed({1, 1}, 5)};
  sys = build_covariance_matrices({{0, 0}, {5, 10.0}, twins}, m);
  CHECK(sys.observations.isApproxToConstant(1.0));

  std::vector<SensorState> pair = {observed({0, 0}, 5), observed({10, 0}, 5)};
  sys = build_covariance_matrices({{0, 0}, {9, 10.0}, pair}, m);
  CHECK(sys.observations(0, 1) == doctest::Approx(0.36788).epsilon(1e-5));
  CHECK(sys.observations(1, 0) == sys.observations(0, 1));
  CHECK(sys.target(0) == doctest::Approx(std::exp(-0.04)));

  std::vector<SensorState> none(2);
  CHECK_THROWS_AS(build_covariance_matrices({{0, 0}, {0, 10.0}, none}, m), Error);
}

TEST_CASE("unobserved sensors are left out") {
  std::vector<SensorState> sensors = {observed({0, 0}, 0), SensorState{}, observed({5, 5}, 0)};
  const auto sys = build_covariance_matrices({{1, 1}, {3, 10.0}, sensors}, {0.001, 0.05, 1.0});
  CHECK(sys.used == std::vector<int>{0, 2});
  CHECK(sys.observations.rows() == 2);
}

TEST_CASE("scalar weight solves") {
  Eigen::MatrixXd c(1, 1);
  c << 1.0;
  Eigen::VectorXd t(1);
  t << 1.0;
  CHECK(lmmse_weights(c, t).weights(0) == doctest::Approx(1.0));
  t << 0.5;
  CHECK(lmmse_weights(c, t).weights(0) == doctest::Approx(0.5));
  CHECK(lmmse_weights(c, t).nugget == 0.0);
  Eigen::VectorXd wrong(2);
  wrong << 1.0, 1.0;
  CHECK_THROWS_AS(lmmse_weights(c, wrong), Error);
}

TEST_CASE("weights match explicit inverse on random systems") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 4;
    const Eigen::MatrixXd c = oracle::random_spd(rng, n, 0.2, 3.0);
    Eigen::VectorXd t(n);
    for (int i = 0; i < n; ++i) t(i) = rng.uniform(-1.0, 1.0);
    const auto got = lmmse_weights(c, t);
    const auto want = oracle::inverse_solve(c, t);
    CHECK(got.nugget == 0.0);
    for (int i = 0; i < n; ++i) CHECK(std::abs(got.weights(i) - want[static_cast<std::size_t>(i)]) < 1e-9);
  }
}

TEST_CASE("singular systems are regularized") {
  Eigen::MatrixXd c = Eigen::MatrixXd::Ones(2, 2);
  Eigen::VectorXd t(2);
  t << 1.0, 1.0;
  const auto w = lmmse_weights(c, t);
  CHECK(w.nugget >= kNuggetStart);
  CHECK(w.nugget <= kNuggetMax);
  CHECK(w.weights.sum() == doctest::Approx(1.0).epsilon(1e-4));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(lmmse_weights(bad, t), Error);
}

TEST_CASE("single sensor estimates") {
  const CovarianceModel m{std::log(2.0) / 100.0, 0.1, 1.0};
  std::vector<SensorState> s = {observed({2, 2}, 20, 1.7)};
  auto r = estimate({{2, 2}, {20, 10.0}, s}, m);
  CHECK(r.estimate == doctest::Approx(1.7));
  CHECK(r.mse == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.step == 20);

  r = estimate({{2, 2}, {30, 10.0}, s}, m);
  CHECK(r.weights(0) == doctest::Approx(0.5));
  CHECK(r.estimate == doctest::Approx(0.85));
  CHECK(r.mse == doctest::Approx(0.75));
}

TEST_CASE("mse bounds and monotonicity") {
  Rng rng(8);
  const CovarianceModel m{0.002, 0.05, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SensorState> s;
    for (int i = 0; i < 5; ++i)
      s.push_back(observed({rng.uniform(0, 40), rng.uniform(0, 30)}, static_cast<Step>(rng.below(200))));
    const Position target{rng.uniform(0, 40), rng.uniform(0, 30)};
    const SimClock now{250, 10.0};
    const double base = estimate({target, now, s}, m).mse;
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);

    auto more = s;
    more.push_back(observed({rng.uniform(0, 40), rng.uniform(0, 30)}, static_cast<Step>(rng.below(200))));
    CHECK(estimate({target, now, more}, m).mse <= base + 1e-9);
  }
}

// With mixed generation times a fresher reading can be more redundant with
// the others, so the age ordering is exact only for a common generation
// time or a lone sensor.
TEST_CASE("mse grows with age") {
  Rng rng(9);
  const CovarianceModel m{0.002, 0.05, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SensorState> s;
    const auto n = 1 + static_cast<int>(rng.below(5));
    const auto tx = static_cast<Step>(rng.below(200));
    for (int i = 0; i < n; ++i) s.push_back(observed({rng.uniform(0, 40), rng.uniform(0, 30)}, tx));
    const Position target{rng.uniform(0, 40), rng.uniform(0, 30)};
    double previous = -1.0;
    for (Step now = tx; now < tx + 400; now += 20) {
      const double mse = estimate({target, {now, 10.0}, s}, m).mse;
      CHECK(mse >= previous - 1e-12);
      previous = mse;
    }
  }
}

TEST_CASE("own location is exact at transmission") {
  Rng rng(13);
  const CovarianceModel m{0.002, 0.05, 1.0};
  std::vector<SensorState> s;
  for (int i = 0; i < 6; ++i)
    s.push_back(observed({rng.uniform(0, 40), rng.uniform(0, 30)}, static_cast<Step>(rng.below(100))));
  s[3].last_tx_step = 120;
  CHECK(estimate({s[3].position, {120, 10.0}, s}, m).mse < 1e-9);
}

TEST_CASE("field estimator agrees with single-target estimates") {
  Rng rng(21);
  const CovarianceModel m{0.002, 0.05, 1.0};
  std::vector<SensorState> s;
  for (int i = 0; i < 7; ++i)
    s.push_back(observed({rng.uniform(0, 40), rng.uniform(0, 30)}, static_cast<Step>(rng.below(50))));
  s[2].has_observation = false;
  FieldEstimator field;
  field.rebuild(s, m, 10.0);
  std::vector<Position> targets;
  for (const auto& x : s) targets.push_back(x.position);
  for (Step now : {Step{60}, Step{90}, Step{400}}) {
    const auto mse = field.mse_at(targets, now);
    for (std::size_t i = 0; i < targets.size(); ++i)
      CHECK(mse[i] == doctest::Approx(estimate({targets[i], {now, 10.0}, s}, m).mse).epsilon(1e-9));
  }

  FieldEstimator empty;
  empty.rebuild(std::vector<SensorState>(3), m, 10.0);
  CHECK_FALSE(empty.has_observations());
  CHECK(empty.mse_at(targets, 5) == std::vector<double>(targets.size(), 1.0));
}

TEST_CASE("analytic mse matches Monte Carlo for three sensors") {
  const CovarianceModel m{0.01, 0.08, 1.0};
  const std::vector<Position> sensors = {{0, 0}, {12, 3}, {5, 14}};
  const std::vector<Step> ages = {4, 11, 25};
  const auto r = oracle::monte_carlo_mse(sensors, ages, {6, 5}, m, 10000, 60, 77);
  MESSAGE("analytic " << r.analytic << " empirical " << r.empirical);
  CHECK(std::abs(r.empirical - r.analytic) / r.analytic < 0.10);
}

TEST_CASE("average error tracker") {
  AverageErrorTracker t(2);
  CHECK_THROWS_AS(t.average(0), Error);
  t.record(0, 0.004);
  t.record(0, 0.006);
  CHECK(t.average(0) == doctest::Approx(0.005));
  auto w = t.close(0);
  CHECK(w.average == doctest::Approx(0.005));
  CHECK(w.delta == 0.0);
  CHECK(w.samples == 2);
  CHECK(t.samples(0) == 0);
  CHECK_THROWS_AS(t.close(0), Error);
  t.record(0, 0.008);
  w = t.close(0);
  CHECK(w.delta == doctest::Approx(0.003));
  t.forget_previous(0);
  t.record(0, 0.1);
  CHECK(t.close(0).delta == 0.0);
  CHECK_THROWS_AS(t.average(1), Error);
}
