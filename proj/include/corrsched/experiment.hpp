#pragma once

// Experiment plumbing shared by the command-line front-end and the
// acceptance suite: dataset preparation, scheduler construction,
// training passes, frozen evaluation, battery sweeps and latency timing.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "corrsched/config.hpp"
#include "corrsched/environment.hpp"

namespace corrsched {

struct PreparedData {
  DatasetFrame train;  // normalized with the training statistics
  DatasetFrame test;
  NormalizationStats stats;
  double native_period_seconds = 0.0;
  StepRange train_range, test_range;
  CovarianceModel model;  // model the simulations run with
  IngestStats ingest;
};

DatasetFrame load_dataset(const ExperimentConfig& config, IngestStats* stats = nullptr);
PreparedData prepare_dataset(const ExperimentConfig& config);
PreparedData prepare_dataset(const DatasetFrame& raw, const ExperimentConfig& config);

// Fits both decay rates on the dense ground truth of a frame; falls back
// to `prior` for any rate the data cannot support.
CovarianceModel calibrate_model(const DatasetFrame& frame, const CovarianceModel& prior, ExtractionOptions options);

bool is_learner(const std::string& agent);
std::unique_ptr<Scheduler> make_scheduler(const std::string& agent, const ExperimentConfig& config,
                                          double native_period_seconds, std::uint64_t seed);
void save_checkpoint(const Scheduler& agent, const std::filesystem::path& path);
void load_checkpoint(Scheduler& agent, const std::filesystem::path& path);

struct PassSummary {
  int pass = 0;
  RunMetrics metrics;
};

// Runs the configured passes over the training split with learning on.
// `log` receives one row per completed episode, prefixed by the pass.
std::vector<PassSummary> train_agent(Scheduler& agent, const PreparedData& data, const ExperimentConfig& config,
                                     std::uint64_t seed, std::ostream* log = nullptr);
void write_training_header(std::ostream& out);

struct EvalOutcome {
  RunMetrics metrics;
  std::vector<EpisodeRecord> records;
  std::vector<double> energy_fractions;
};

// Frozen run over `frame` (exploration and learning off).
EvalOutcome evaluate_agent(Scheduler& agent, const DatasetFrame& frame, const PreparedData& data,
                           const ExperimentConfig& config, std::uint64_t seed,
                           const std::vector<double>& energy_fractions = {}, std::ostream* events = nullptr);

// Group of each sensor; groups are interleaved along the sensor order so
// each one spans the deployment.
std::vector<std::size_t> assign_groups(std::size_t sensors, const std::vector<double>& fractions);
std::vector<double> group_energy_fractions(std::size_t sensors, const std::vector<double>& fractions,
                                           const std::vector<double>& levels);

struct GroupIntervals {
  std::vector<double> mean_interval_seconds;  // per group
  std::vector<double> mean_rate_hz;           // per group, mean of 1 / interval
};
GroupIntervals group_intervals(const RunMetrics& metrics, const std::vector<std::size_t>& groups, std::size_t count);

struct EnergySweepRow {
  double level = 0.0;
  double swept_interval_seconds = 0.0;
  double other_interval_seconds = 0.0;
  // Mean update rate of the other groups over that of the swept group.
  double rate_ratio = 0.0;
  double mean_error_ratio = 0.0;
  double fraction_above_target = 0.0;
};

std::vector<EnergySweepRow> energy_sweep(Scheduler& agent, const PreparedData& data, const ExperimentConfig& config,
                                         std::uint64_t seed, std::ostream* trajectories = nullptr);

struct LatencyStats {
  long decisions = 0;
  double mean_ms = 0.0;
  double p99_ms = 0.0;
};

// Times state construction plus one frozen decision.
LatencyStats benchmark_decisions(Scheduler& agent, const ExperimentConfig& config, std::size_t sensors, long decisions,
                                 std::uint64_t seed);

}  // namespace corrsched
