#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "corrsched/config.hpp"
#include "corrsched/error.hpp"
#include "corrsched/experiment.hpp"

namespace corrsched::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string command;
  std::string config;
  std::string dataset;
  std::string agents;
  std::string seeds = "1";
  std::string out = "runs";
  int passes = 0;
  std::vector<std::string> checkpoints;
  bool events = false;
  bool intel_fixture = false;
  long malformed_every = 0;
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig:
    case ErrorKind::kInvalidInput:
      return kExitUsage;
    case ErrorKind::kDataGap:
    case ErrorKind::kEndOfData:
    case ErrorKind::kSchema:
    case ErrorKind::kIo:
    case ErrorKind::kEmptyDataset:
    case ErrorKind::kSize:
      return kExitData;
    case ErrorKind::kMissingArtifact:
      return kExitMissing;
    default:
      return kExitFailure;
  }
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(text, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      require(used == s.size(), ErrorKind::kInvalidConfig, "");
      out.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidConfig, "--seed: '" + s + "' is not a non-negative integer");
    }
  }
  require(!out.empty(), ErrorKind::kInvalidConfig, "--seed: at least one seed is required");
  return out;
}

// --dataset accepts synthetic, csv:PATH, frame:PATH or intel:READINGS:LOCATIONS.
void apply_dataset(ExperimentConfig& config, const std::string& selector) {
  if (selector.empty()) return;
  const auto colon = selector.find(':');
  const std::string kind = selector.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : selector.substr(colon + 1);
  config.dataset.kind = kind;
  if (kind == "synthetic") return;
  if (kind == "intel") {
    const auto sep = rest.find(':');
    config.dataset.path = rest.substr(0, sep);
    config.dataset.locations = sep == std::string::npos ? "" : rest.substr(sep + 1);
    return;
  }
  require(kind == "csv" || kind == "frame", ErrorKind::kInvalidConfig,
          "--dataset: unknown kind '" + kind + "' (synthetic|csv:PATH|intel:READINGS:LOCATIONS|frame:PATH)");
  config.dataset.path = rest;
}

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig config = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  apply_dataset(config, o.dataset);
  if (o.passes > 0) config.training.passes = o.passes;
  config.validate();
  return config;
}

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

struct RunDir {
  fs::path path;
  std::string created;
};

RunDir make_run_dir(const Options& o, const std::string& agent, std::uint64_t seed) {
  RunDir dir;
  dir.created = utc_stamp();
  const std::string base = o.command + "-" + agent + "-" + dir.created + "-s" + std::to_string(seed);
  std::error_code ec;
  fs::create_directories(o.out, ec);
  require(!ec, ErrorKind::kIo, "cannot create output directory " + o.out);
  for (int n = 1;; ++n) {
    dir.path = fs::path(o.out) / (n == 1 ? base : base + "-" + std::to_string(n));
    if (fs::create_directory(dir.path, ec)) break;
    require(!ec, ErrorKind::kIo, "cannot create run directory " + dir.path.string());
  }
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

void write_manifest(const RunDir& dir, const Options& o, const ExperimentConfig& config, const std::string& agents,
                    std::uint64_t seed) {
  nlohmann::ordered_json m;
  m["command"] = o.command;
  m["agents"] = agents;
  m["dataset"] = o.dataset.empty() ? config.dataset.kind : o.dataset;
  m["seed"] = seed;
  m["config_path"] = o.config;
  m["passes"] = config.training.passes;
  m["checkpoints"] = o.checkpoints;
  m["output_dir"] = dir.path.string();
  m["created"] = dir.created;
  open_output(dir.path / "manifest.json") << m.dump(2) << "\n";
  auto ini = open_output(dir.path / "config.ini");
  write_config(ini, config);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Checkpoint for `agent`: either "agent=path" or a bare path when only
// one learner is requested.
fs::path checkpoint_for(const Options& o, const std::string& agent, std::size_t learners) {
  for (const auto& c : o.checkpoints) {
    const auto eq = c.find('=');
    if (eq != std::string::npos && c.substr(0, eq) == agent) return c.substr(eq + 1);
    if (eq == std::string::npos && learners == 1) return c;
  }
  fail(ErrorKind::kMissingArtifact, "no checkpoint given for agent '" + agent + "' (use --checkpoint " + agent + "=PATH)");
}

std::vector<std::string> agent_list(const Options& o, const std::string& fallback) {
  auto agents = split_list(o.agents.empty() ? fallback : o.agents, ',');
  for (const auto& a : agents)
    require(a == "ddpg" || a == "dqn" || a == "fixed" || a == "ideal", ErrorKind::kInvalidConfig,
            "--agent: unknown agent '" + a + "' (ddpg|dqn|fixed|ideal)");
  return agents;
}

std::size_t count_learners(const std::vector<std::string>& agents) {
  std::size_t n = 0;
  for (const auto& a : agents) n += is_learner(a) ? 1 : 0;
  return n;
}

void write_sensor_table(std::ostream& out, const RunMetrics& m) {
  out << "# corrsched sensors v" << kCsvSchemaVersion << "\n";
  out << "sensor_id,transmissions,mean_interval_seconds,lifetime_days,final_energy_joules,mean_error\n";
  for (const auto& s : m.sensors)
    out << s.id << "," << s.transmissions << "," << fmt(s.mean_interval_seconds) << ","
        << fmt(s.lifetime_seconds / kSecondsPerDay) << "," << fmt(s.final_energy_joules) << "," << fmt(s.mean_error)
        << "\n";
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto agents = agent_list(o, "ddpg");
  require(agents.size() == 1 && is_learner(agents[0]), ErrorKind::kInvalidConfig,
          "train: --agent must name one learner (ddpg or dqn)");
  const std::string& agent = agents[0];
  for (const auto seed : parse_seeds(o.seeds)) {
    ExperimentConfig config = resolve_config(o);
    config.sim.seed = seed;
    const PreparedData data = prepare_dataset(config);
    const RunDir dir = make_run_dir(o, agent, seed);
    write_manifest(dir, o, config, agent, seed);

    auto scheduler = make_scheduler(agent, config, data.native_period_seconds, seed);
    auto log = open_output(dir.path / "training_log.csv");
    write_training_header(log);
    const auto passes = train_agent(*scheduler, data, config, seed, &log);
    save_checkpoint(*scheduler, dir.path / "checkpoint.bin");

    auto summary = open_output(dir.path / "summary.txt");
    summary << "agent " << agent << " seed " << seed << "\n";
    summary << "covariance theta_time " << fmt(data.model.theta_time) << " theta_space " << fmt(data.model.theta_space)
            << "\n";
    for (const auto& p : passes)
      summary << "pass " << p.pass << " episodes " << p.metrics.episodes << " mean_error_ratio "
              << fmt(p.metrics.mean_error_ratio) << " mean_interval_seconds " << fmt(p.metrics.mean_interval_seconds)
              << "\n";
    out << dir.path.string() << "\n";
  }
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const auto agents = agent_list(o, "ddpg,fixed,ideal");
  const std::size_t learners = count_learners(agents);
  for (const auto& a : agents)
    if (is_learner(a)) {
      const auto path = checkpoint_for(o, a, learners);
      require(fs::exists(path), ErrorKind::kMissingArtifact, "checkpoint not found: " + path.string());
    }

  for (const auto seed : parse_seeds(o.seeds)) {
    ExperimentConfig config = resolve_config(o);
    config.sim.seed = seed;
    const PreparedData data = prepare_dataset(config);
    check_disjoint(data.train_range, data.test_range);
    const RunDir dir = make_run_dir(o, o.agents.empty() ? "all" : o.agents, seed);
    write_manifest(dir, o, config, o.agents, seed);

    auto table = open_output(dir.path / "evaluation.csv");
    table << "# corrsched evaluation v" << kCsvSchemaVersion << "\n";
    table << "agent,seed,episodes,mean_interval_seconds,network_lifetime_days,native_lifetime_days,lifetime_gain,"
             "mean_error_ratio,fraction_above_target,oracle_violations\n";
    std::ostringstream text;
    for (const auto& a : agents) {
      auto scheduler = make_scheduler(a, config, data.native_period_seconds, seed);
      if (is_learner(a)) load_checkpoint(*scheduler, checkpoint_for(o, a, learners));
      std::ofstream events;
      if (o.events) events = open_output(dir.path / ("events-" + a + ".csv"));
      const EvalOutcome eval = evaluate_agent(*scheduler, data.test, data, config, seed, {}, o.events ? &events : nullptr);
      const auto& m = eval.metrics;
      table << a << "," << seed << "," << m.episodes << "," << fmt(m.mean_interval_seconds) << ","
            << fmt(m.network_lifetime_seconds / kSecondsPerDay) << "," << fmt(m.native_lifetime_seconds / kSecondsPerDay)
            << "," << fmt(m.lifetime_gain) << "," << fmt(m.mean_error_ratio) << "," << fmt(m.fraction_above_target)
            << "," << m.oracle_violations << "\n";
      auto episodes = open_output(dir.path / ("episodes-" + a + ".csv"));
      write_episode_header(episodes);
      for (const auto& r : eval.records) write_episode_row(episodes, r);
      auto sensors = open_output(dir.path / ("sensors-" + a + ".csv"));
      write_sensor_table(sensors, m);
      text << a << ": mean interval " << fmt(m.mean_interval_seconds) << " s, network lifetime "
           << fmt(m.network_lifetime_seconds / kSecondsPerDay) << " days, gain " << fmt(m.lifetime_gain)
           << ", mean error ratio " << fmt(m.mean_error_ratio) << ", windows above target "
           << fmt(100.0 * m.fraction_above_target) << "%\n";
    }
    open_output(dir.path / "summary.txt") << text.str();
    out << text.str() << dir.path.string() << "\n";
  }
  return kExitOk;
}

int cmd_benchmark(const Options& o, std::ostream& out) {
  const auto agents = agent_list(o, "ddpg,dqn");
  const std::size_t learners = count_learners(agents);
  const auto seed = parse_seeds(o.seeds).front();
  ExperimentConfig config = resolve_config(o);
  const RunDir dir = make_run_dir(o, o.agents.empty() ? "learners" : o.agents, seed);
  write_manifest(dir, o, config, o.agents, seed);
  const std::size_t sensors = config.dataset.synthetic.sensors < 2 ? 2 : config.dataset.synthetic.sensors;

  auto table = open_output(dir.path / "benchmark.csv");
  table << "# corrsched benchmark v" << kCsvSchemaVersion << "\nagent,decisions,mean_ms,p99_ms\n";
  std::map<std::string, LatencyStats> stats;
  for (const auto& a : agents) {
    auto scheduler = make_scheduler(a, config, 31.0, seed);
    if (is_learner(a)) load_checkpoint(*scheduler, checkpoint_for(o, a, learners));
    const auto s = benchmark_decisions(*scheduler, config, sensors, config.benchmark.decisions, seed);
    stats[a] = s;
    table << a << "," << s.decisions << "," << fmt(s.mean_ms) << "," << fmt(s.p99_ms) << "\n";
    out << a << ": " << s.decisions << " decisions, mean " << fmt(s.mean_ms) << " ms, p99 " << fmt(s.p99_ms)
        << " ms\n";
  }
  if (stats.count("ddpg") && stats.count("dqn")) {
    const bool ok = stats["dqn"].mean_ms <= 2.0 * stats["ddpg"].mean_ms;
    out << "soft check dqn <= 2 x ddpg mean latency: " << (ok ? "holds" : "does not hold") << "\n";
  }
  out << dir.path.string() << "\n";
  return kExitOk;
}

int cmd_energy(const Options& o, std::ostream& out) {
  const auto agents = agent_list(o, "ddpg");
  require(agents.size() == 1 && is_learner(agents[0]), ErrorKind::kInvalidConfig,
          "energy-experiment: --agent must name one learner");
  const auto path = checkpoint_for(o, agents[0], 1);
  for (const auto seed : parse_seeds(o.seeds)) {
    ExperimentConfig config = resolve_config(o);
    config.sim.seed = seed;
    const PreparedData data = prepare_dataset(config);
    auto scheduler = make_scheduler(agents[0], config, data.native_period_seconds, seed);
    load_checkpoint(*scheduler, path);
    const RunDir dir = make_run_dir(o, agents[0], seed);
    write_manifest(dir, o, config, agents[0], seed);
    auto trajectories = open_output(dir.path / "trajectories.csv");
    const auto rows = energy_sweep(*scheduler, data, config, seed, &trajectories);
    auto table = open_output(dir.path / "energy_sweep.csv");
    table << "# corrsched energy sweep v" << kCsvSchemaVersion << "\n";
    table << "level,swept_interval_seconds,other_interval_seconds,rate_ratio,mean_error_ratio,fraction_above_target\n";
    for (const auto& r : rows) {
      table << fmt(r.level) << "," << fmt(r.swept_interval_seconds) << "," << fmt(r.other_interval_seconds) << ","
            << fmt(r.rate_ratio) << "," << fmt(r.mean_error_ratio) << "," << fmt(r.fraction_above_target) << "\n";
      out << "level " << fmt(r.level) << ": rate ratio " << fmt(r.rate_ratio) << ", mean error ratio "
          << fmt(r.mean_error_ratio) << "\n";
    }
    out << dir.path.string() << "\n";
  }
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  ExperimentConfig config = resolve_config(o);
  const auto seed = parse_seeds(o.seeds).front();
  config.dataset.synthetic.seed = seed;
  const DatasetFrame frame = generate_synthetic(config.dataset.synthetic);
  const RunDir dir = make_run_dir(o, "synthetic", seed);
  write_manifest(dir, o, config, "", seed);
  write_csv(frame, dir.path / "dataset.csv");
  save_frame(frame, dir.path / "frame.csfr");
  if (o.intel_fixture) {
    IntelFixtureOptions fixture;
    if (frame.native_period_seconds > 0.0) fixture.period_seconds = frame.native_period_seconds;
    fixture.malformed_every = o.malformed_every;
    write_intel_fixture(frame, dir.path / "intel_readings.txt", dir.path / "intel_locations.txt", fixture);
  }
  out << frame.sensors() << " sensors x " << frame.steps() << " steps\n" << dir.path.string() << "\n";
  return kExitOk;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  require(!o.dataset.empty(), ErrorKind::kInvalidConfig, "ingest: --dataset is required");
  ExperimentConfig config = resolve_config(o);
  IngestStats stats;
  const DatasetFrame frame = load_dataset(config, &stats);
  const auto seed = parse_seeds(o.seeds).front();
  const RunDir dir = make_run_dir(o, config.dataset.kind, seed);
  write_manifest(dir, o, config, "", seed);
  save_frame(frame, dir.path / "frame.csfr");
  write_csv(frame, dir.path / "dataset.csv");
  auto report = open_output(dir.path / "ingest_report.txt");
  report << "rows " << stats.rows << "\nmalformed_rows " << stats.malformed_rows << "\nduplicate_rows "
         << stats.duplicate_rows << "\nsensors " << frame.sensors() << "\nsteps " << frame.steps()
         << "\nnative_period_seconds " << fmt(frame.native_period_seconds) << "\n";
  for (int id : stats.dropped_sensors) report << "dropped_sensor " << id << "\n";
  for (const auto& w : stats.warnings) report << "warning " << w << "\n";
  out << frame.sensors() << " sensors x " << frame.steps() << " steps, " << stats.malformed_rows
      << " malformed rows skipped\n"
      << dir.path.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy-aware update-interval scheduling for correlated sensors", "corrsched"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI configuration file");
    sub->add_option("--dataset", o.dataset, "synthetic | csv:PATH | intel:READINGS:LOCATIONS | frame:PATH");
    sub->add_option("--seed", o.seeds, "seed or comma-separated seed list");
    sub->add_option("--out", o.out, "directory that receives the run directories");
  };
  auto* train = app.add_subcommand("train", "train a learner on the training split");
  add_common(train);
  train->add_option("--agent", o.agents, "ddpg or dqn");
  train->add_option("--passes", o.passes, "passes over the training split")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "frozen evaluation on the test split");
  add_common(evaluate);
  evaluate->add_option("--agent", o.agents, "comma-separated agents (ddpg,dqn,fixed,ideal)");
  evaluate->add_option("--checkpoint", o.checkpoints, "learner checkpoint, PATH or AGENT=PATH");
  evaluate->add_flag("--events", o.events, "also write per-step event logs");

  auto* bench = app.add_subcommand("benchmark", "per-decision latency");
  add_common(bench);
  bench->add_option("--agent", o.agents, "comma-separated learners");
  bench->add_option("--checkpoint", o.checkpoints, "learner checkpoint, PATH or AGENT=PATH");

  auto* energy = app.add_subcommand("energy-experiment", "battery-level sweep with a trained learner");
  add_common(energy);
  energy->add_option("--agent", o.agents, "ddpg or dqn");
  energy->add_option("--checkpoint", o.checkpoints, "learner checkpoint");

  auto* synth = app.add_subcommand("synth", "generate a synthetic space-time field");
  add_common(synth);
  synth->add_flag("--intel-fixture", o.intel_fixture, "also write the field in the Intel lab text layout");
  synth->add_option("--malformed-every", o.malformed_every, "corrupt every n-th fixture row");

  auto* ingest = app.add_subcommand("ingest", "ingest a dataset onto the simulation grid");
  add_common(ingest);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (train->parsed()) {
      o.command = "train";
      return cmd_train(o, out);
    }
    if (evaluate->parsed()) {
      o.command = "evaluate";
      return cmd_evaluate(o, out);
    }
    if (bench->parsed()) {
      o.command = "benchmark";
      return cmd_benchmark(o, out);
    }
    if (energy->parsed()) {
      o.command = "energy";
      return cmd_energy(o, out);
    }
    if (synth->parsed()) {
      o.command = "synth";
      return cmd_synth(o, out);
    }
    o.command = "ingest";
    return cmd_ingest(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace corrsched::cli
