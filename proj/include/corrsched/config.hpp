#pragma once

// INI-style experiment configuration. Every section mirrors one group of
// simulation or learner settings; unknown keys are rejected.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "corrsched/data.hpp"
#include "corrsched/ddpg.hpp"
#include "corrsched/dqn.hpp"
#include "corrsched/environment.hpp"

namespace corrsched {

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | csv | intel | frame
  std::string path;
  std::string locations;
  std::string channel = "temperature";
  // Dataset-native reporting period; taken from the data when 0.
  double native_period_seconds = 0.0;
  double train_fraction = 0.5;
  // Optional subset of sensors by column (empty keeps all).
  std::vector<std::size_t> sensors;
  SyntheticSpec synthetic;
};

enum class ModelSource {
  kConfig,  // use [covariance] theta values as given
  kTrain,   // fit them on the training split ground truth
};

struct TrainingConfig {
  int passes = 2;
  // Share of passes that draw per-sensor battery levels uniformly in
  // [energy_min_fraction, 1]; the other passes start every battery full.
  // Randomized passes are interleaved with the full ones.
  double randomized_energy_fraction = 0.5;
  double energy_min_fraction = 0.05;
};

struct EnergyProfile {
  std::vector<double> group_fractions = {0.9, 0.1};
  std::vector<double> group_levels = {1.0, 1.0};
  std::size_t sweep_group = 1;
  std::vector<double> sweep_levels = {0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0};

  void validate() const;
};

struct BenchmarkConfig {
  long decisions = 10000;
};

struct ExperimentConfig {
  SimulationConfig sim;
  ModelSource model_source = ModelSource::kTrain;
  DdpgConfig ddpg;
  DqnConfig dqn;
  DatasetConfig dataset;
  TrainingConfig training;
  EnergyProfile energy_profile;
  BenchmarkConfig benchmark;

  void validate() const;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
// Fully resolved configuration in the same format parse_config reads.
void write_config(std::ostream& out, const ExperimentConfig& config);

std::vector<double> parse_double_list(const std::string& text);

}  // namespace corrsched
