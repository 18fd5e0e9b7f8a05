#pragma once

// Dataset ingestion onto the simulation grid, train/test splitting and a
// synthetic space-time Gaussian field with the separable exponential law.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "corrsched/covariance.hpp"
#include "corrsched/sensors.hpp"

namespace corrsched {

// Per-sensor series aligned to one grid of step_seconds; row k of
// `values` is the zero-order-held reading of each sensor at
// origin_seconds + k * step_seconds.
struct DatasetFrame {
  std::string channel;
  double step_seconds = 10.0;
  double origin_seconds = 0.0;
  double native_period_seconds = 0.0;  // 0 when unknown
  std::vector<int> sensor_ids;
  std::vector<Position> positions;
  Eigen::MatrixXd values;  // steps x sensors
  std::optional<Step> split_step;

  Step steps() const { return static_cast<Step>(values.rows()); }
  std::size_t sensors() const { return sensor_ids.size(); }
  double value(Step step, std::size_t sensor) const { return values(static_cast<Eigen::Index>(step), static_cast<Eigen::Index>(sensor)); }

  bool operator==(const DatasetFrame& other) const;
};

struct IngestStats {
  long rows = 0;
  long malformed_rows = 0;
  long duplicate_rows = 0;
  std::vector<int> dropped_sensors;  // no location / no usable samples
  std::vector<std::string> warnings;
};

struct Ingested {
  DatasetFrame frame;
  IngestStats stats;
};

enum class IntelChannel { kTemperature, kHumidity, kLight, kVoltage };

IntelChannel parse_intel_channel(const std::string& name);
const char* to_string(IntelChannel channel);

// Intel Berkeley lab layout: whitespace separated
//   date time epoch moteid temperature humidity light voltage
// and a location file of "moteid x y" lines.
Ingested ingest_intel(const std::filesystem::path& readings, const std::filesystem::path& locations,
                      IntelChannel channel, double step_seconds);

// Generic CSV with a header naming sensor_id, timestamp (seconds), value, x, y.
// A leading "# ... native_period=SECONDS" comment overrides the period
// estimated from the sample gaps.
Ingested ingest_csv(const std::filesystem::path& path, double step_seconds, const std::string& channel = "value");

// Writes every grid sample in the ingest_csv schema.
void write_csv(const DatasetFrame& frame, const std::filesystem::path& path);

// Splits at `boundary` (grid step): train = [0, boundary), test = [boundary, end).
std::pair<DatasetFrame, DatasetFrame> split(const DatasetFrame& frame, Step boundary);

NormalizationStats frame_stats(const DatasetFrame& frame);
DatasetFrame normalized(const DatasetFrame& frame, const NormalizationStats& stats);
// Subset of sensors by column index, order preserved.
DatasetFrame select_sensors(const DatasetFrame& frame, const std::vector<std::size_t>& columns);

struct SyntheticSpec {
  std::size_t sensors = 10;
  double width_m = 40.0;
  double height_m = 30.0;
  double theta_time = 0.002;
  double theta_space = 0.05;
  double variance = 1.0;
  Step steps = 5000;
  double step_seconds = 10.0;
  std::uint64_t seed = 1;
  std::vector<Position> positions;  // drawn uniformly in the area when empty
  double native_period_seconds = 0.0;
};

inline constexpr std::size_t kMaxSyntheticSensors = 256;
inline constexpr double kMaxSyntheticValues = 5e7;

// Exact sampling: spatial factor from the eigen-decomposition of the
// spatial correlation, temporal factor via the AR(1) recursion that the
// exponential kernel induces on a regular grid.
DatasetFrame generate_synthetic(const SyntheticSpec& spec);

// Writes a frame's values in the Intel lab text layout, one reading per
// `period_seconds`, as temperature = offset + scale * value.
struct IntelFixtureOptions {
  double period_seconds = 31.0;
  double offset = 20.0;
  double scale = 2.0;
  long malformed_every = 0;  // every n-th reading emitted with a missing field (0 = never)
  std::vector<int> unlocated_motes;  // extra motes written without a location entry
};
void write_intel_fixture(const DatasetFrame& frame, const std::filesystem::path& readings,
                         const std::filesystem::path& locations, const IntelFixtureOptions& options);

// Versioned binary cache of a frame.
void save_frame(const DatasetFrame& frame, std::ostream& out);
DatasetFrame load_frame(std::istream& in);
void save_frame(const DatasetFrame& frame, const std::filesystem::path& path);
DatasetFrame load_frame(const std::filesystem::path& path);

}  // namespace corrsched
