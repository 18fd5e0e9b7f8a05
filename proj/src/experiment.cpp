#include "corrsched/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "corrsched/binary_io.hpp"
#include "corrsched/ddpg.hpp"
#include "corrsched/dqn.hpp"
#include "corrsched/error.hpp"
#include "corrsched/rng.hpp"

namespace corrsched {

namespace {

constexpr char kCheckpointMagic[5] = "CSCK";

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
  return rng.fork_seed();
}

void require_path(const std::string& value, const std::string& field, const std::string& kind) {
  require(!value.empty(), ErrorKind::kInvalidConfig, field + " is required for " + kind + " datasets");
}

}  // namespace

DatasetFrame load_dataset(const ExperimentConfig& config, IngestStats* stats) {
  const auto& d = config.dataset;
  const double step = config.sim.step_seconds;
  Ingested in;
  if (d.kind == "synthetic") {
    require(std::abs(d.synthetic.step_seconds - step) < 1e-9, ErrorKind::kInvalidConfig,
            "synthetic.step_seconds must equal simulation.step_seconds");
    in.frame = generate_synthetic(d.synthetic);
  } else if (d.kind == "csv") {
    require_path(d.path, "dataset.path", "csv");
    require(d.native_period_seconds > 0.0, ErrorKind::kInvalidConfig,
            "dataset.native_period_seconds is required for csv datasets");
    in = ingest_csv(d.path, step, d.channel);
  } else if (d.kind == "intel") {
    require_path(d.path, "dataset.path", "intel");
    require_path(d.locations, "dataset.locations", "intel");
    in = ingest_intel(d.path, d.locations, parse_intel_channel(d.channel), step);
  } else if (d.kind == "frame") {
    require_path(d.path, "dataset.path", "frame");
    in.frame = load_frame(std::filesystem::path(d.path));
    require(std::abs(in.frame.step_seconds - step) < 1e-9, ErrorKind::kInvalidConfig,
            "frame grid step differs from simulation.step_seconds");
  } else {
    fail(ErrorKind::kInvalidConfig, "unknown dataset.kind '" + d.kind + "'");
  }
  if (d.native_period_seconds > 0.0) in.frame.native_period_seconds = d.native_period_seconds;
  if (!d.sensors.empty()) in.frame = select_sensors(in.frame, d.sensors);
  if (stats) *stats = in.stats;
  return in.frame;
}

CovarianceModel calibrate_model(const DatasetFrame& frame, const CovarianceModel& prior, ExtractionOptions options) {
  options.step_seconds = frame.step_seconds;
  ObservationWindow window(frame.steps() + 1);
  for (Step k = 0; k < frame.steps(); ++k)
    for (std::size_t s = 0; s < frame.sensors(); ++s) window.push({frame.sensor_ids[s], k, frame.value(k, s)});
  std::map<int, Position> positions;
  for (std::size_t s = 0; s < frame.sensors(); ++s) positions[frame.sensor_ids[s]] = frame.positions[s];
  return refit(prior, extract_scaling_parameters(window, positions, options));
}

PreparedData prepare_dataset(const DatasetFrame& raw, const ExperimentConfig& config) {
  PreparedData out;
  const auto boundary = static_cast<Step>(std::floor(static_cast<double>(raw.steps()) * config.dataset.train_fraction));
  auto [train, test] = split(raw, boundary);
  out.train_range = {0, boundary};
  out.test_range = {boundary, raw.steps()};
  check_disjoint(out.train_range, out.test_range);
  out.stats = frame_stats(train);
  require(out.stats.variance > 0.0, ErrorKind::kEmptyDataset, "training split has no variation");
  out.train = normalized(train, out.stats);
  out.test = normalized(test, out.stats);
  out.native_period_seconds = raw.native_period_seconds;
  out.model = config.sim.model;
  if (config.model_source == ModelSource::kTrain)
    out.model = calibrate_model(out.train, config.sim.model, config.sim.extraction);
  return out;
}

PreparedData prepare_dataset(const ExperimentConfig& config) {
  IngestStats stats;
  const DatasetFrame raw = load_dataset(config, &stats);
  PreparedData out = prepare_dataset(raw, config);
  out.ingest = std::move(stats);
  return out;
}

bool is_learner(const std::string& agent) { return agent == "ddpg" || agent == "dqn"; }

std::unique_ptr<Scheduler> make_scheduler(const std::string& agent, const ExperimentConfig& config,
                                          double native_period_seconds, std::uint64_t seed) {
  const IntervalLimits limits = config.sim.limits();
  if (agent == "ddpg") {
    DdpgConfig c = config.ddpg;
    c.seed = seed;
    return std::make_unique<DdpgAgent>(c, limits);
  }
  if (agent == "dqn") {
    DqnConfig c = config.dqn;
    c.seed = seed;
    return std::make_unique<DqnAgent>(c, limits);
  }
  if (agent == "fixed") {
    require(native_period_seconds > 0.0, ErrorKind::kInvalidConfig,
            "the fixed agent needs dataset.native_period_seconds");
    return std::make_unique<FixedScheduler>(native_period_seconds, config.sim.step_seconds);
  }
  if (agent == "ideal") return std::make_unique<IdealScheduler>(config.sim.ideal_trigger, limits);
  fail(ErrorKind::kInvalidConfig, "unknown agent '" + agent + "' (ddpg|dqn|fixed|ideal)");
}

void save_checkpoint(const Scheduler& agent, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  binio::put_magic(out, kCheckpointMagic);
  binio::put_string(out, std::string(agent.name()));
  if (const auto* d = dynamic_cast<const DdpgAgent*>(&agent))
    d->save(out);
  else if (const auto* q = dynamic_cast<const DqnAgent*>(&agent))
    q->save(out);
  else
    fail(ErrorKind::kInvalidInput, std::string("agent '") + std::string(agent.name()) + "' has no checkpoint");
}

void load_checkpoint(Scheduler& agent, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kMissingArtifact, "checkpoint not found: " + path.string());
  binio::expect_magic(in, kCheckpointMagic, "checkpoint");
  const std::string name = binio::get_string(in);
  require(name == agent.name(), ErrorKind::kSchema,
          "checkpoint holds a '" + name + "' agent, expected '" + std::string(agent.name()) + "'");
  if (auto* d = dynamic_cast<DdpgAgent*>(&agent))
    d->load(in);
  else if (auto* q = dynamic_cast<DqnAgent*>(&agent))
    q->load(in);
}

void write_training_header(std::ostream& out) {
  out << "# corrsched training log v" << kCsvSchemaVersion << "\n";
  out << "pass,sensor_id,window_start,window_end,average_error,delta,accuracy_reward,energy_reward,reward,action,"
         "action_index,interval_steps,energy_fraction\n";
}

std::vector<PassSummary> train_agent(Scheduler& agent, const PreparedData& data, const ExperimentConfig& config,
                                     std::uint64_t seed, std::ostream* log) {
  std::vector<PassSummary> out;
  Rng energy_rng(mix_seed(seed, 1000));
  for (int pass = 0; pass < config.training.passes; ++pass) {
    SimulationConfig sc = config.sim;
    sc.model = data.model;
    sc.seed = mix_seed(seed, static_cast<std::uint64_t>(pass));
    const double f = config.training.randomized_energy_fraction;
    if (std::floor(f * (pass + 1)) > std::floor(f * pass)) {
      sc.initial_energy_fraction.resize(data.train.sensors());
      for (auto& f : sc.initial_energy_fraction) f = energy_rng.uniform(config.training.energy_min_fraction, 1.0);
    }
    Simulation sim(data.train, sc, agent, true);
    sim.run();
    if (log) {
      for (const auto& r : sim.records()) {
        *log << pass << ",";
        write_episode_row(*log, r);
      }
    }
    out.push_back({pass, sim.metrics(data.native_period_seconds)});
  }
  return out;
}

EvalOutcome evaluate_agent(Scheduler& agent, const DatasetFrame& frame, const PreparedData& data,
                           const ExperimentConfig& config, std::uint64_t seed,
                           const std::vector<double>& energy_fractions, std::ostream* events) {
  SimulationConfig sc = config.sim;
  sc.model = data.model;
  sc.seed = mix_seed(seed, 7777);
  if (!energy_fractions.empty()) sc.initial_energy_fraction = energy_fractions;
  Simulation sim(frame, sc, agent, false);
  sim.set_event_log(events);
  sim.run();
  EvalOutcome out;
  out.metrics = sim.metrics(data.native_period_seconds);
  out.records = sim.records();
  out.energy_fractions = sc.initial_energy_fraction;
  return out;
}

std::vector<std::size_t> assign_groups(std::size_t sensors, const std::vector<double>& fractions) {
  require(!fractions.empty(), ErrorKind::kInvalidConfig, "at least one group is required");
  std::vector<std::size_t> group(sensors);
  std::vector<double> assigned(fractions.size(), 0.0);
  for (std::size_t i = 0; i < sensors; ++i) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t g = 0; g < fractions.size(); ++g) {
      const double deficit = fractions[g] * static_cast<double>(i + 1) - assigned[g];
      if (deficit > best_deficit + 1e-12) {
        best_deficit = deficit;
        best = g;
      }
    }
    group[i] = best;
    assigned[best] += 1.0;
  }
  return group;
}

std::vector<double> group_energy_fractions(std::size_t sensors, const std::vector<double>& fractions,
                                           const std::vector<double>& levels) {
  require(fractions.size() == levels.size(), ErrorKind::kInvalidConfig, "one energy level per group is required");
  const auto groups = assign_groups(sensors, fractions);
  std::vector<double> out(sensors);
  for (std::size_t i = 0; i < sensors; ++i) out[i] = levels[groups[i]];
  return out;
}

GroupIntervals group_intervals(const RunMetrics& metrics, const std::vector<std::size_t>& groups, std::size_t count) {
  GroupIntervals out;
  out.mean_interval_seconds.assign(count, 0.0);
  out.mean_rate_hz.assign(count, 0.0);
  std::vector<double> members(count, 0.0);
  for (std::size_t i = 0; i < metrics.sensors.size(); ++i) {
    const auto g = groups.at(i);
    out.mean_interval_seconds[g] += metrics.sensors[i].mean_interval_seconds;
    out.mean_rate_hz[g] += 1.0 / metrics.sensors[i].mean_interval_seconds;
    members[g] += 1.0;
  }
  for (std::size_t g = 0; g < count; ++g) {
    if (members[g] == 0.0) continue;
    out.mean_interval_seconds[g] /= members[g];
    out.mean_rate_hz[g] /= members[g];
  }
  return out;
}

std::vector<EnergySweepRow> energy_sweep(Scheduler& agent, const PreparedData& data, const ExperimentConfig& config,
                                         std::uint64_t seed, std::ostream* trajectories) {
  const auto& profile = config.energy_profile;
  profile.validate();
  const std::size_t n = data.test.sensors();
  const auto groups = assign_groups(n, profile.group_fractions);
  const std::size_t count = profile.group_fractions.size();
  if (trajectories)
    *trajectories << "# corrsched interval trajectories v" << kCsvSchemaVersion
                  << "\nlevel,sensor_id,group,window_start,window_end,interval_steps,average_error\n";

  std::vector<EnergySweepRow> rows;
  for (double level : profile.sweep_levels) {
    auto levels = profile.group_levels;
    levels[profile.sweep_group] = level;
    const auto fractions = group_energy_fractions(n, profile.group_fractions, levels);
    const EvalOutcome eval = evaluate_agent(agent, data.test, data, config, seed, fractions);
    const auto gi = group_intervals(eval.metrics, groups, count);

    EnergySweepRow row;
    row.level = level;
    row.swept_interval_seconds = gi.mean_interval_seconds[profile.sweep_group];
    double other_rate = 0.0, other_interval = 0.0, other_members = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (groups[i] == profile.sweep_group) continue;
      other_rate += 1.0 / eval.metrics.sensors[i].mean_interval_seconds;
      other_interval += eval.metrics.sensors[i].mean_interval_seconds;
      other_members += 1.0;
    }
    if (other_members > 0.0) {
      row.other_interval_seconds = other_interval / other_members;
      row.rate_ratio = (other_rate / other_members) / gi.mean_rate_hz[profile.sweep_group];
    }
    row.mean_error_ratio = eval.metrics.mean_error_ratio;
    row.fraction_above_target = eval.metrics.fraction_above_target;
    rows.push_back(row);

    if (trajectories) {
      std::map<int, std::size_t> column;
      for (std::size_t i = 0; i < n; ++i) column[data.test.sensor_ids[i]] = i;
      char buf[256];
      for (const auto& r : eval.records) {
        std::snprintf(buf, sizeof buf, "%.10g,%d,%zu,%lld,%lld,%lld,%.10g\n", level, r.sensor_id,
                      groups[column[r.sensor_id]], static_cast<long long>(r.window_start),
                      static_cast<long long>(r.window_end), static_cast<long long>(r.interval_steps),
                      r.average_error);
        *trajectories << buf;
      }
    }
  }
  return rows;
}

LatencyStats benchmark_decisions(Scheduler& agent, const ExperimentConfig& config, std::size_t sensors, long decisions,
                                 std::uint64_t seed) {
  require(sensors >= 2 && decisions >= 1, ErrorKind::kInvalidInput, "benchmark needs two sensors and one decision");
  Rng rng(seed);
  const auto& sim = config.sim;
  const Step max_steps = sim.limits().max_steps();
  std::vector<SensorState> states(sensors);
  std::vector<double> ratios(sensors);
  agent.begin_run(sensors);
  agent.set_exploration(false);

  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(decisions));
  Step now = 0;
  for (long d = 0; d < decisions; ++d) {
    for (std::size_t i = 0; i < sensors; ++i) {
      states[i].energy_joules = rng.uniform(0.05, 1.0) * sim.energy.initial_energy_joules;
      states[i].update_interval_steps = 1 + static_cast<Step>(rng.below(static_cast<std::uint64_t>(max_steps)));
      ratios[i] = rng.uniform(0.0, 2.0);
    }
    const std::size_t who = static_cast<std::size_t>(rng.below(sensors));
    now += 1;
    const auto start = std::chrono::steady_clock::now();
    const AgentStateVector state = build_state(who, states, ratios, sim);
    const Decision decision = agent.decide({who, state, states[who].update_interval_steps, now});
    const auto stop = std::chrono::steady_clock::now();
    if (decision.interval_steps < 1) fail(ErrorKind::kInvalidState, "decision produced an empty interval");
    samples.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  LatencyStats out;
  out.decisions = decisions;
  double sum = 0.0;
  for (double s : samples) sum += s;
  out.mean_ms = sum / static_cast<double>(samples.size());
  const auto idx = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(samples.size()))) - 1;
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(idx), samples.end());
  out.p99_ms = samples[idx];
  return out;
}

}  // namespace corrsched
