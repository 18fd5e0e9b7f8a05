// Acceptance suite: one PASS/FAIL line per headline criterion.
//
//   acceptance [--only NAME]... [--configs DIR] [--seeds N]
//
// Training-based criteria load the shipped experiment configs, so a pass
// here means the shipped settings reproduce the results.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "corrsched/config.hpp"
#include "corrsched/ddpg.hpp"
#include "corrsched/estimator.hpp"
#include "corrsched/experiment.hpp"
#include "corrsched/nn.hpp"
#include "corrsched/rng.hpp"
#include "corrsched/sensors.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace corrsched;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- estimator

Verdict estimator_monte_carlo() {
  const auto t0 = std::chrono::steady_clock::now();
  const CovarianceModel model{0.01, 0.08, 1.0};
  Rng rng(2024);
  std::string detail;
  bool ok = true;
  for (std::size_t n : {1u, 3u, 10u}) {
    std::vector<Position> sensors(n);
    std::vector<Step> ages(n);
    for (std::size_t j = 0; j < n; ++j) {
      sensors[j] = {rng.uniform(0.0, 40.0), rng.uniform(0.0, 30.0)};
      ages[j] = static_cast<Step>(rng.below(12));
    }
    // Close to the first sensor so even N=1 carries real information.
    const Position target{sensors[0].x + rng.uniform(-2.0, 2.0), sensors[0].y + rng.uniform(-2.0, 2.0)};
    const auto mc = oracle::monte_carlo_mse(sensors, ages, target, model, 10000, 60, 100 + n);
    const double rel = std::abs(mc.empirical - mc.analytic) / mc.analytic;
    ok = ok && rel <= 0.10;
    detail += fmt("N=%zu analytic %.4f empirical %.4f (%.1f%%); ", n, mc.analytic, mc.empirical, 100 * rel);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  return {ok, detail + fmt("%.1f s", secs)};
}

Verdict linear_algebra_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(77);
  double worst = 0.0;
  int solved = 0;
  while (solved < 1000) {
    const int n = 1 + static_cast<int>(rng.below(6));
    const CovarianceModel model{rng.uniform(1e-4, 1e-2), rng.uniform(0.01, 0.2), 1.0};
    std::vector<SensorState> sensors(static_cast<std::size_t>(n));
    for (auto& s : sensors) {
      s.position = {rng.uniform(0.0, 40.0), rng.uniform(0.0, 30.0)};
      s.last_tx_step = static_cast<Step>(rng.below(100));
      s.has_observation = true;
    }
    const EstimationQuery q{{rng.uniform(0.0, 40.0), rng.uniform(0.0, 30.0)}, {100, 10.0}, sensors};
    const auto sys = build_covariance_matrices(q, model);
    // Well-conditioned instances only; near-duplicates are the nugget's business.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.observations);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) / sv(0) < 1e-6) continue;
    const auto w = lmmse_weights(sys.observations, sys.target);
    const auto ref = oracle::inverse_solve(sys.observations, sys.target);
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(w.weights(i) - ref[static_cast<std::size_t>(i)]));
    ++solved;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 10.0, fmt("1000 instances, worst |w - w_inv| %.2e, %.2f s", worst, secs)};
}

// ---------------------------------------------------------------- gradients

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); }

struct GradientCheck {
  long checked = 0;
  long skipped = 0;
  double worst = 0.0;
};

// Central differences of sum(out .* r) in training mode, dropout masks
// replayed from one seed so every evaluation sees the same network.
GradientCheck check_network(nn::Network& net, Eigen::MatrixXd x, const Eigen::MatrixXd& r) {
  const std::uint64_t mask_seed = 99;
  net.set_training(true);
  auto loss = [&](const Eigen::MatrixXd& input, std::vector<bool>* signs) {
    net.seed_dropout(mask_seed);
    const double v = (net.forward(input).array() * r.array()).sum();
    if (signs) {
      signs->clear();
      for (std::size_t l = 0; l < net.layers().size(); ++l)
        if (net.layers()[l].activation == nn::Activation::kRelu) {
          const auto& pre = net.pre_activation(l);
          for (Eigen::Index i = 0; i < pre.size(); ++i) signs->push_back(pre(i) > 0.0);
        }
    }
    return v;
  };
  loss(x, nullptr);
  const auto g = net.backward(r);
  const double h = 1e-6;
  GradientCheck out;
  std::vector<bool> up_signs, down_signs;
  auto record = [&](double up, double down, double analytic) {
    if (up_signs != down_signs) {
      ++out.skipped;
      return;
    }
    ++out.checked;
    out.worst = std::max(out.worst, rel_err((up - down) / (2 * h), analytic));
  };
  for (Eigen::Index p = 0; p < net.parameters().size(); ++p) {
    const double orig = net.parameters()(p);
    net.parameters()(p) = orig + h;
    const double up = loss(x, &up_signs);
    net.parameters()(p) = orig - h;
    const double down = loss(x, &down_signs);
    net.parameters()(p) = orig;
    record(up, down, g.params(p));
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = x(i, j);
      x(i, j) = orig + h;
      const double up = loss(x, &up_signs);
      x(i, j) = orig - h;
      const double down = loss(x, &down_signs);
      x(i, j) = orig;
      record(up, down, g.input(i, j));
    }
  return out;
}

Verdict gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const DdpgConfig cfg;
  Rng rng(5);
  bool ok = true;
  std::string detail;
  for (const auto& [name, width, act] :
       {std::tuple{"actor", 6, nn::Activation::kTanh}, std::tuple{"critic", 7, nn::Activation::kIdentity}}) {
    nn::Network net(ddpg_layers(width, cfg, act), rng);
    Eigen::MatrixXd x(32, width), r(32, 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = rng.normal();
    const auto c = check_network(net, x, r);
    ok = ok && c.worst <= 1e-4 && c.skipped * 10 < c.checked;
    detail += fmt("%s %ld checked (%ld at ReLU kinks skipped) worst rel err %.2e; ", name, c.checked, c.skipped,
                  c.worst);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  return {ok, detail + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------- lifetime

Verdict lifetime_arithmetic() {
  // Battery 2 x 1.5 V x 620 mAh; 15 uW sleep draw; 78.7 mJ per transmission.
  const double e0 = 2 * 1.5 * 0.620 * 3600;
  auto by_hand = [e0](double interval) { return e0 / (15e-6 + 78.7e-3 / interval); };
  const EnergyParams p;
  const double month = expected_lifetime_seconds(p, 31.0);
  const double years = expected_lifetime_seconds(p, 2940.0);
  const double d1 = std::abs(month / by_hand(31.0) - 1.0);
  const double d2 = std::abs(years / by_hand(2940.0) - 1.0);
  const double days = month / kSecondsPerDay;
  const double yrs = years / (365.0 * kSecondsPerDay);
  const bool ok = d1 <= 0.02 && d2 <= 0.02 && std::abs(days - 30.3) / 30.3 <= 0.02 && std::abs(yrs - 5.08) / 5.08 <= 0.02;
  return {ok, fmt("T=31 s: %.2f days (hand %.2e rel); T=2940 s: %.3f years (hand %.2e rel)", days, d1, yrs, d2)};
}

// ---------------------------------------------------------------- trained runs

struct Settings {
  std::string configs;
  int seeds = 3;
};

struct Trained {
  ExperimentConfig config;
  PreparedData data;
  std::unique_ptr<Scheduler> agent;
  RunMetrics ddpg, fixed, ideal;
  double seconds = 0.0;
};

class Runs {
 public:
  explicit Runs(Settings s) : settings_(std::move(s)) {}

  const Settings& settings() const { return settings_; }

  ExperimentConfig config(const std::string& name) const {
    return load_config(std::filesystem::path(settings_.configs) / (name + ".ini"));
  }

  // Synthetic field, or the same kind of field routed through the Intel
  // text layout and ingest path.
  Trained& get(const std::string& kind, std::size_t sensors, std::uint64_t seed) {
    const auto key = std::make_tuple(kind, sensors, seed);
    auto it = cache_.find(key);
    if (it != cache_.end()) return *it->second;
    const auto t0 = std::chrono::steady_clock::now();
    auto run = std::make_unique<Trained>();
    run->config = config(kind);
    auto& c = run->config;
    c.sim.seed = seed;
    c.dataset.synthetic.seed = seed;
    c.dataset.synthetic.sensors = sensors;
    if (kind == "intel") {
      c.dataset.kind = "synthetic";
      const DatasetFrame field = load_dataset(c);
      IntelFixtureOptions fixture;
      fixture.period_seconds = field.native_period_seconds;
      write_intel_fixture(field, scratch_ / "readings.txt", scratch_ / "locations.txt", fixture);
      c.dataset.kind = "intel";
      c.dataset.path = (scratch_ / "readings.txt").string();
      c.dataset.locations = (scratch_ / "locations.txt").string();
    }
    run->data = prepare_dataset(c);
    for (const std::string baseline : {"fixed", "ideal"}) {
      auto s = make_scheduler(baseline, c, run->data.native_period_seconds, seed);
      const auto m = evaluate_agent(*s, run->data.test, run->data, c, seed).metrics;
      (baseline == "fixed" ? run->fixed : run->ideal) = m;
    }
    run->agent = make_scheduler("ddpg", c, run->data.native_period_seconds, seed);
    train_agent(*run->agent, run->data, c, seed);
    run->ddpg = evaluate_agent(*run->agent, run->data.test, run->data, c, seed).metrics;
    run->seconds = seconds_since(t0);
    std::cerr << "  trained " << kind << " N=" << sensors << " seed " << seed << ": ratio "
              << run->ddpg.mean_error_ratio << ", above " << run->ddpg.fraction_above_target << ", "
              << run->seconds << " s\n";
    return *cache_.emplace(key, std::move(run)).first->second;
  }

 private:
  Settings settings_;
  TempDir scratch_{"acceptance"};
  std::map<std::tuple<std::string, std::size_t, std::uint64_t>, std::unique_ptr<Trained>> cache_;
};

Verdict error_band(Runs& runs) {
  bool ok = true;
  std::string detail;
  for (const std::string kind : {"synthetic", "intel"})
    for (int seed = 1; seed <= runs.settings().seeds; ++seed) {
      const auto& r = runs.get(kind, runs.config(kind).dataset.synthetic.sensors, seed);
      const auto& m = r.ddpg;
      ok = ok && m.mean_error_ratio >= 0.85 && m.mean_error_ratio <= 1.0 && m.fraction_above_target <= 0.05 &&
           r.seconds <= 1800.0;
      detail += fmt("%s/%d ratio %.3f above %.1f%% (%.0f s); ", kind.c_str(), seed, m.mean_error_ratio,
                    100 * m.fraction_above_target, r.seconds);
    }
  return {ok, detail};
}

Verdict oracle_dominance(Runs& runs) {
  bool ok = true;
  std::string detail;
  for (const std::string kind : {"synthetic", "intel"})
    for (int seed = 1; seed <= runs.settings().seeds; ++seed) {
      const auto& r = runs.get(kind, runs.config(kind).dataset.synthetic.sensors, seed);
      const double ideal = r.ideal.network_lifetime_seconds, ddpg = r.ddpg.network_lifetime_seconds,
                   fixed = r.fixed.network_lifetime_seconds;
      ok = ok && ideal >= ddpg && ddpg >= fixed;
      detail += fmt("%s/%d days ideal %.0f ddpg %.0f fixed %.1f; ", kind.c_str(), seed, ideal / kSecondsPerDay,
                    ddpg / kSecondsPerDay, fixed / kSecondsPerDay);
    }
  return {ok, detail};
}

Verdict gain_trend(Runs& runs) {
  std::vector<double> eta;
  std::string detail;
  for (std::size_t n : {5u, 10u, 20u}) {
    double sum = 0.0;
    for (int seed = 1; seed <= runs.settings().seeds; ++seed) sum += runs.get("synthetic", n, seed).ddpg.lifetime_gain;
    eta.push_back(sum / runs.settings().seeds);
    detail += fmt("N=%zu eta %.2f; ", n, eta.back());
  }
  return {eta[0] <= eta[1] && eta[1] <= eta[2], detail};
}

Verdict energy_balancing(Runs& runs) {
  const ExperimentConfig sweep_cfg = runs.config("synthetic");
  auto& r = runs.get("synthetic", sweep_cfg.dataset.synthetic.sensors, 1);
  ExperimentConfig c = r.config;
  auto sweep = [&](std::vector<double> fractions, std::vector<double> levels, std::size_t group,
                   std::vector<double> sweep_levels) {
    c.energy_profile.group_fractions = std::move(fractions);
    c.energy_profile.group_levels = std::move(levels);
    c.energy_profile.sweep_group = group;
    c.energy_profile.sweep_levels = std::move(sweep_levels);
    return energy_sweep(*r.agent, r.data, c, 1);
  };
  // Two halves at 75 % and 25 %: the low-energy half must sleep longer.
  const auto split = sweep({0.5, 0.5}, {0.75, 0.25}, 1, {0.25});
  const bool ordered = split[0].swept_interval_seconds > split[0].other_interval_seconds;
  // Equal batteries.
  const auto equal = sweep({0.5, 0.5}, {1.0, 1.0}, 1, {1.0});
  const bool balanced = std::abs(equal[0].rate_ratio - 1.0) <= 0.1;
  // Swept minority group over increasing levels: the others' relative rate falls.
  const auto curve = sweep(sweep_cfg.energy_profile.group_fractions, sweep_cfg.energy_profile.group_levels,
                           sweep_cfg.energy_profile.sweep_group, sweep_cfg.energy_profile.sweep_levels);
  bool monotone = curve.size() >= 4;
  std::string levels;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (i > 0) monotone = monotone && curve[i].rate_ratio <= curve[i - 1].rate_ratio;
    levels += fmt("%s%.2f:%.2f", i ? " " : "", curve[i].level, curve[i].rate_ratio);
  }
  return {ordered && balanced && monotone,
          fmt("75/25 intervals %.0f s (25%%) vs %.0f s (75%%); equal-battery rate ratio %.3f; level:ratio %s",
              split[0].swept_interval_seconds, split[0].other_interval_seconds, equal[0].rate_ratio, levels.c_str())};
}

// ---------------------------------------------------------------- determinism

Verdict determinism(Runs& runs) {
  bool ok = true;
  std::string detail;
  for (const std::string kind : {"synthetic", "intel"})
    for (const std::string agent : {"ddpg", "dqn", "fixed", "ideal"}) {
      std::string logs[2];
      for (auto& log : logs) {
        TempDir dir("determinism");
        ExperimentConfig c = runs.config(kind);
        c.training.passes = 2;
        c.dataset.synthetic.steps = std::min<Step>(c.dataset.synthetic.steps, 8640);
        c.sim.seed = 11;
        if (kind == "intel") {
          c.dataset.kind = "synthetic";
          const DatasetFrame field = load_dataset(c);
          IntelFixtureOptions fixture;
          fixture.period_seconds = field.native_period_seconds;
          fixture.malformed_every = 97;
          write_intel_fixture(field, dir / "readings.txt", dir / "locations.txt", fixture);
          c.dataset.kind = "intel";
          c.dataset.path = (dir / "readings.txt").string();
          c.dataset.locations = (dir / "locations.txt").string();
        }
        const auto data = prepare_dataset(c);
        auto s = make_scheduler(agent, c, data.native_period_seconds, 11);
        std::ostringstream out;
        if (is_learner(agent)) train_agent(*s, data, c, 11, &out);
        evaluate_agent(*s, data.test, data, c, 11, {}, &out);
        log = out.str();
      }
      const bool same = !logs[0].empty() && logs[0] == logs[1];
      ok = ok && same;
      detail += fmt("%s/%s %zu bytes %s; ", kind.c_str(), agent.c_str(), logs[0].size(), same ? "identical" : "DIFFER");
    }
  return {ok, detail};
}

Verdict bandit_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  int hits = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = oracle::ddpg_bandit(seed, 5000);
    hits += std::abs(r.greedy_action - 0.5) <= 0.1 ? 1 : 0;
    detail += fmt("%.3f ", r.greedy_action);
  }
  return {hits >= 4, fmt("greedy actions %s(optimum 0.5), %d/5 within 0.1, %.1f s", detail.c_str(), hits,
                         seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<std::string> only;
  Settings settings{CORRSCHED_CONFIG_DIR, 3};
  app.add_option("--only", only, "run only the named criteria");
  app.add_option("--configs", settings.configs, "directory holding synthetic.ini and intel.ini");
  app.add_option("--seeds", settings.seeds, "seeds per trained dataset")->check(CLI::Range(1, 100));
  CLI11_PARSE(app, argc, argv);

  Runs runs(settings);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"estimator-monte-carlo", estimator_monte_carlo},
      {"linear-algebra-oracle", linear_algebra_oracle},
      {"gradient-correctness", gradient_correctness},
      {"lifetime-arithmetic", lifetime_arithmetic},
      {"error-target-band", [&] { return error_band(runs); }},
      {"oracle-dominance", [&] { return oracle_dominance(runs); }},
      {"lifetime-gain-trend", [&] { return gain_trend(runs); }},
      {"energy-balancing", [&] { return energy_balancing(runs); }},
      {"determinism", [&] { return determinism(runs); }},
      {"ddpg-bandit-convergence", bandit_convergence},
  };
  const std::set<std::string> wanted(only.begin(), only.end());
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
