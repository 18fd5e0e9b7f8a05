#include "corrsched/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "corrsched/binary_io.hpp"
#include "corrsched/error.hpp"
#include "corrsched/rng.hpp"

namespace corrsched {

namespace {

constexpr char kFrameMagic[5] = "CSFR";
constexpr std::uint32_t kFrameVersion = 1;

struct Sample {
  double time = 0.0;
  double value = 0.0;
};

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, long& out) {
  double d = 0.0;
  if (!parse_double(s, d) || d != std::floor(d)) return false;
  out = static_cast<long>(d);
  return true;
}

// "YYYY-MM-DD" + "HH:MM:SS[.ffffff]" as UTC seconds.
bool parse_timestamp(const std::string& date, const std::string& time, double& out) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double s = 0.0;
  if (std::sscanf(date.c_str(), "%d-%d-%d", &y, &mo, &d) != 3) return false;
  if (std::sscanf(time.c_str(), "%d:%d:%lf", &h, &mi, &s) != 3) return false;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0.0 || s >= 61.0) return false;
  const auto days_since = sys_days{ymd}.time_since_epoch().count();
  out = static_cast<double>(days_since) * kSecondsPerDay + h * 3600.0 + mi * 60.0 + s;
  return true;
}

void format_timestamp(double t, std::string& date, std::string& time) {
  using namespace std::chrono;
  const auto whole = static_cast<long long>(std::floor(t));
  const double frac = t - static_cast<double>(whole);
  const sys_seconds secs{seconds{whole}};
  const auto day_point = floor<days>(secs);
  const year_month_day ymd{day_point};
  const hh_mm_ss<seconds> tod{secs - day_point};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  date = buf;
  std::snprintf(buf, sizeof buf, "%02ld:%02ld:%02ld.%06ld", static_cast<long>(tod.hours().count()),
                static_cast<long>(tod.minutes().count()), static_cast<long>(tod.seconds().count()),
                std::lround(frac * 1e6) % 1000000);
  time = buf;
}

// Zero-order hold of each sensor's samples onto a shared grid that starts
// once every sensor has reported.
DatasetFrame resample(std::map<int, std::vector<Sample>> series, const std::map<int, Position>& located,
                      double step_seconds, const std::string& channel, IngestStats& stats) {
  require(step_seconds > 0.0, ErrorKind::kInvalidInput, "grid step must be positive");
  for (auto it = series.begin(); it != series.end();) {
    if (!located.count(it->first)) {
      stats.dropped_sensors.push_back(it->first);
      stats.warnings.push_back("sensor " + std::to_string(it->first) + " has no location; dropped");
      it = series.erase(it);
    } else {
      ++it;
    }
  }
  require(!series.empty(), ErrorKind::kEmptyDataset, "no usable sensors after ingestion");

  double first = -std::numeric_limits<double>::infinity();
  double last = -std::numeric_limits<double>::infinity();
  for (auto& [id, samples] : series) {
    std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.time < b.time; });
    first = std::max(first, samples.front().time);
    last = std::max(last, samples.back().time);
  }
  const double origin = std::ceil(first / step_seconds - 1e-9) * step_seconds;
  const double end = std::max(origin, std::ceil(last / step_seconds - 1e-9) * step_seconds);
  const auto steps = static_cast<Eigen::Index>(std::llround((end - origin) / step_seconds)) + 1;

  DatasetFrame frame;
  frame.channel = channel;
  frame.step_seconds = step_seconds;
  frame.origin_seconds = origin;
  frame.values.resize(steps, static_cast<Eigen::Index>(series.size()));
  std::vector<double> gaps;
  Eigen::Index col = 0;
  for (const auto& [id, samples] : series) {
    frame.sensor_ids.push_back(id);
    frame.positions.push_back(located.at(id));
    std::size_t idx = 0;
    double current = samples.front().value;
    for (Eigen::Index k = 0; k < steps; ++k) {
      const double t = origin + static_cast<double>(k) * step_seconds;
      while (idx < samples.size() && samples[idx].time <= t + 1e-9) current = samples[idx++].value;
      frame.values(k, col) = current;
    }
    for (std::size_t i = 1; i < samples.size(); ++i)
      if (samples[i].time > samples[i - 1].time) gaps.push_back(samples[i].time - samples[i - 1].time);
    ++col;
  }
  if (!gaps.empty()) {
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    frame.native_period_seconds = gaps[gaps.size() / 2];
  }
  return frame;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  if (sep == ' ') {
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
  }
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read " + path.string());
  return in;
}

}  // namespace

bool DatasetFrame::operator==(const DatasetFrame& o) const {
  if (channel != o.channel || step_seconds != o.step_seconds || origin_seconds != o.origin_seconds ||
      native_period_seconds != o.native_period_seconds || sensor_ids != o.sensor_ids || split_step != o.split_step ||
      positions.size() != o.positions.size() || values.rows() != o.values.rows() || values.cols() != o.values.cols())
    return false;
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (positions[i].x != o.positions[i].x || positions[i].y != o.positions[i].y) return false;
  return values == o.values;
}

IntelChannel parse_intel_channel(const std::string& name) {
  if (name == "temperature") return IntelChannel::kTemperature;
  if (name == "humidity") return IntelChannel::kHumidity;
  if (name == "light") return IntelChannel::kLight;
  if (name == "voltage") return IntelChannel::kVoltage;
  fail(ErrorKind::kInvalidInput, "unknown Intel channel '" + name + "'");
}

const char* to_string(IntelChannel channel) {
  switch (channel) {
    case IntelChannel::kTemperature: return "temperature";
    case IntelChannel::kHumidity: return "humidity";
    case IntelChannel::kLight: return "light";
    case IntelChannel::kVoltage: return "voltage";
  }
  return "unknown";
}

Ingested ingest_intel(const std::filesystem::path& readings, const std::filesystem::path& locations,
                      IntelChannel channel, double step_seconds) {
  Ingested result;
  auto& stats = result.stats;

  std::map<int, Position> located;
  {
    auto in = open_input(locations);
    std::string line;
    while (std::getline(in, line)) {
      const auto f = split_fields(line, ' ');
      if (f.empty() || f[0][0] == '#') continue;
      long id = 0;
      Position p;
      if (f.size() < 3 || !parse_int(f[0], id) || !parse_double(f[1], p.x) || !parse_double(f[2], p.y)) {
        stats.warnings.push_back("unparseable location line: " + line);
        continue;
      }
      located[static_cast<int>(id)] = p;
    }
  }

  const std::size_t column = 4 + static_cast<std::size_t>(channel);
  std::map<int, std::vector<Sample>> series;
  auto in = open_input(readings);
  std::string line;
  while (std::getline(in, line)) {
    const auto f = split_fields(line, ' ');
    if (f.empty()) continue;
    ++stats.rows;
    double t = 0.0, value = 0.0;
    long epoch = 0, mote = 0;
    if (f.size() < 8 || !parse_timestamp(f[0], f[1], t) || !parse_int(f[2], epoch) || !parse_int(f[3], mote) ||
        !parse_double(f[column], value)) {
      ++stats.malformed_rows;
      continue;
    }
    series[static_cast<int>(mote)].push_back({t, value});
  }
  result.frame = resample(std::move(series), located, step_seconds, to_string(channel), stats);
  return result;
}

Ingested ingest_csv(const std::filesystem::path& path, double step_seconds, const std::string& channel) {
  Ingested result;
  auto& stats = result.stats;
  auto in = open_input(path);
  std::string line;
  std::vector<std::string> header;
  std::optional<double> declared_period;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto key = line.find("native_period=");
      double p = 0.0;
      if (key != std::string::npos && parse_double(split_fields(line.substr(key + 14), ' ').front(), p) && p > 0.0)
        declared_period = p;
      continue;
    }
    header = split_fields(line, ',');
    break;
  }
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name : {"sensor_id", "timestamp", "value", "x", "y"})
    require(col.count(name) > 0, ErrorKind::kSchema, std::string("CSV header lacks column '") + name + "'");
  const std::size_t need = header.size();

  // (sensor, timestamp) -> value; later rows overwrite earlier ones.
  std::map<int, std::map<double, double>> raw;
  std::map<int, Position> located;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    ++stats.rows;
    const auto f = split_fields(line, ',');
    long id = 0;
    double t = 0.0, v = 0.0;
    Position p;
    if (f.size() < need || !parse_int(f[col["sensor_id"]], id) || !parse_double(f[col["timestamp"]], t) ||
        !parse_double(f[col["value"]], v) || !parse_double(f[col["x"]], p.x) || !parse_double(f[col["y"]], p.y)) {
      ++stats.malformed_rows;
      continue;
    }
    auto& per = raw[static_cast<int>(id)];
    if (per.count(t)) {
      ++stats.duplicate_rows;
      stats.warnings.push_back("duplicate reading for sensor " + std::to_string(id) + " at " + std::to_string(t) +
                               "; last value wins");
    }
    per[t] = v;
    located[static_cast<int>(id)] = p;
  }
  std::map<int, std::vector<Sample>> series;
  for (const auto& [id, per] : raw)
    for (const auto& [t, v] : per) series[id].push_back({t, v});
  result.frame = resample(std::move(series), located, step_seconds, channel, stats);
  if (declared_period) result.frame.native_period_seconds = *declared_period;
  return result;
}

void write_csv(const DatasetFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out << "# corrsched dataset csv v1 channel=" << frame.channel;
  if (frame.native_period_seconds > 0.0) {
    char period[64];
    std::snprintf(period, sizeof period, " native_period=%.17g", frame.native_period_seconds);
    out << period;
  }
  out << "\n";
  out << "sensor_id,timestamp,value,x,y\n";
  char buf[160];
  for (std::size_t s = 0; s < frame.sensors(); ++s) {
    for (Step k = 0; k < frame.steps(); ++k) {
      const double t = frame.origin_seconds + static_cast<double>(k) * frame.step_seconds;
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", frame.sensor_ids[s], t, frame.value(k, s),
                    frame.positions[s].x, frame.positions[s].y);
      out << buf;
    }
  }
}

std::pair<DatasetFrame, DatasetFrame> split(const DatasetFrame& frame, Step boundary) {
  require(boundary > 0, ErrorKind::kInvalidInput, "split boundary leaves an empty training part");
  require(boundary < frame.steps(), ErrorKind::kInvalidInput, "split boundary leaves an empty test part");
  DatasetFrame train = frame, test = frame;
  train.values = frame.values.topRows(static_cast<Eigen::Index>(boundary));
  test.values = frame.values.bottomRows(static_cast<Eigen::Index>(frame.steps() - boundary));
  test.origin_seconds = frame.origin_seconds + static_cast<double>(boundary) * frame.step_seconds;
  train.split_step.reset();
  test.split_step.reset();
  return {std::move(train), std::move(test)};
}

NormalizationStats frame_stats(const DatasetFrame& frame) {
  const std::span<const double> all(frame.values.data(), static_cast<std::size_t>(frame.values.size()));
  return compute_stats(all);
}

DatasetFrame normalized(const DatasetFrame& frame, const NormalizationStats& stats) {
  require(stats.variance > 0.0, ErrorKind::kInvalidInput, "normalization variance must be positive");
  DatasetFrame out = frame;
  out.values = ((frame.values.array() - stats.mean) / stats.stddev()).matrix();
  return out;
}

DatasetFrame select_sensors(const DatasetFrame& frame, const std::vector<std::size_t>& columns) {
  DatasetFrame out = frame;
  out.sensor_ids.clear();
  out.positions.clear();
  out.values.resize(frame.values.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    require(columns[j] < frame.sensors(), ErrorKind::kInvalidInput, "sensor column out of range");
    out.sensor_ids.push_back(frame.sensor_ids[columns[j]]);
    out.positions.push_back(frame.positions[columns[j]]);
    out.values.col(static_cast<Eigen::Index>(j)) = frame.values.col(static_cast<Eigen::Index>(columns[j]));
  }
  return out;
}

DatasetFrame generate_synthetic(const SyntheticSpec& spec) {
  require(spec.sensors > 0 && spec.steps > 0 && spec.width_m > 0.0 && spec.height_m > 0.0 && spec.step_seconds > 0.0,
          ErrorKind::kInvalidInput, "synthetic extents and durations must be positive");
  require(spec.theta_time >= 0.0 && spec.theta_space >= 0.0 && spec.variance > 0.0, ErrorKind::kInvalidInput,
          "synthetic covariance parameters out of range");
  require(spec.sensors <= kMaxSyntheticSensors &&
              static_cast<double>(spec.sensors) * static_cast<double>(spec.steps) <= kMaxSyntheticValues,
          ErrorKind::kSize, "synthetic field exceeds the exact-sampling limit");
  require(spec.positions.empty() || spec.positions.size() == spec.sensors, ErrorKind::kInvalidInput,
          "explicit positions must cover every sensor");

  Rng rng(spec.seed);
  DatasetFrame frame;
  frame.channel = "synthetic";
  frame.step_seconds = spec.step_seconds;
  frame.native_period_seconds = spec.native_period_seconds;
  const auto n = static_cast<Eigen::Index>(spec.sensors);
  for (Eigen::Index i = 0; i < n; ++i) {
    frame.sensor_ids.push_back(static_cast<int>(i + 1));
    if (spec.positions.empty())
      frame.positions.push_back({rng.uniform(0.0, spec.width_m), rng.uniform(0.0, spec.height_m)});
    else
      frame.positions.push_back(spec.positions[static_cast<std::size_t>(i)]);
  }

  Eigen::MatrixXd spatial(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      spatial(i, j) = std::exp(-spec.theta_space * distance(frame.positions[i], frame.positions[j]));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(spatial);
  // Eigenvalues at round-off level are treated as exact zeros.
  const double floor = 1e-12 * eig.eigenvalues().cwiseAbs().maxCoeff();
  const Eigen::VectorXd scale =
      eig.eigenvalues().unaryExpr([floor](double v) { return v > floor ? std::sqrt(v) : 0.0; });
  const Eigen::MatrixXd factor = eig.eigenvectors() * scale.asDiagonal() * std::sqrt(spec.variance);

  const double rho = std::exp(-spec.theta_time * spec.step_seconds);
  const double innovation = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  frame.values.resize(static_cast<Eigen::Index>(spec.steps), n);
  Eigen::VectorXd noise(n), z(n);
  for (Eigen::Index i = 0; i < n; ++i) noise(i) = rng.normal();
  z = factor * noise;
  frame.values.row(0) = z.transpose();
  for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(spec.steps); ++k) {
    for (Eigen::Index i = 0; i < n; ++i) noise(i) = rng.normal();
    z = rho * z + innovation * (factor * noise);
    frame.values.row(k) = z.transpose();
  }
  return frame;
}

void write_intel_fixture(const DatasetFrame& frame, const std::filesystem::path& readings,
                         const std::filesystem::path& locations, const IntelFixtureOptions& options) {
  require(options.period_seconds > 0.0, ErrorKind::kInvalidInput, "fixture period must be positive");
  {
    std::ofstream loc(locations);
    require(static_cast<bool>(loc), ErrorKind::kIo, "cannot write " + locations.string());
    char buf[128];
    for (std::size_t s = 0; s < frame.sensors(); ++s) {
      std::snprintf(buf, sizeof buf, "%d %.6f %.6f\n", frame.sensor_ids[s], frame.positions[s].x, frame.positions[s].y);
      loc << buf;
    }
  }
  std::ofstream out(readings);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + readings.string());
  const double duration = static_cast<double>(frame.steps() - 1) * frame.step_seconds;
  const auto readings_per_mote = static_cast<long>(std::floor(duration / options.period_seconds)) + 1;
  std::string date, time;
  char buf[256];
  long emitted = 0;
  for (long e = 0; e < readings_per_mote; ++e) {
    const double offset = static_cast<double>(e) * options.period_seconds;
    const double t = frame.origin_seconds + offset;
    const auto k = static_cast<Step>(std::floor(offset / frame.step_seconds + 1e-9));
    format_timestamp(t, date, time);
    auto emit = [&](int mote, double z) {
      ++emitted;
      const double temp = options.offset + options.scale * z;
      const double hum = 40.0 - 3.0 * z;
      if (options.malformed_every > 0 && emitted % options.malformed_every == 0) {
        std::snprintf(buf, sizeof buf, "%s %s %ld %d\n", date.c_str(), time.c_str(), e, mote);
      } else {
        std::snprintf(buf, sizeof buf, "%s %s %ld %d %.4f %.4f %.2f %.5f\n", date.c_str(), time.c_str(), e, mote, temp,
                      hum, 120.0, 2.68);
      }
      out << buf;
    };
    for (std::size_t s = 0; s < frame.sensors(); ++s) emit(frame.sensor_ids[s], frame.value(k, s));
    for (int mote : options.unlocated_motes) emit(mote, 0.0);
  }
}

void save_frame(const DatasetFrame& frame, std::ostream& out) {
  binio::put_magic(out, kFrameMagic);
  binio::put_uint<std::uint32_t>(out, kFrameVersion);
  binio::put_string(out, frame.channel);
  binio::put_f64(out, frame.step_seconds);
  binio::put_f64(out, frame.origin_seconds);
  binio::put_f64(out, frame.native_period_seconds);
  binio::put_i64(out, frame.split_step.value_or(-1));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(frame.sensors()));
  binio::put_uint<std::uint64_t>(out, static_cast<std::uint64_t>(frame.steps()));
  for (std::size_t s = 0; s < frame.sensors(); ++s) {
    binio::put_i64(out, frame.sensor_ids[s]);
    binio::put_f64(out, frame.positions[s].x);
    binio::put_f64(out, frame.positions[s].y);
  }
  for (Step k = 0; k < frame.steps(); ++k)
    for (std::size_t s = 0; s < frame.sensors(); ++s) binio::put_f64(out, frame.value(k, s));
}

DatasetFrame load_frame(std::istream& in) {
  binio::expect_magic(in, kFrameMagic, "frame cache");
  const auto version = binio::get_uint<std::uint32_t>(in);
  require(version == kFrameVersion, ErrorKind::kSchema, "unsupported frame cache version " + std::to_string(version));
  DatasetFrame frame;
  frame.channel = binio::get_string(in);
  frame.step_seconds = binio::get_f64(in);
  frame.origin_seconds = binio::get_f64(in);
  frame.native_period_seconds = binio::get_f64(in);
  const auto split_step = binio::get_i64(in);
  if (split_step >= 0) frame.split_step = split_step;
  const auto n = binio::get_uint<std::uint32_t>(in);
  const auto steps = binio::get_uint<std::uint64_t>(in);
  for (std::uint32_t s = 0; s < n; ++s) {
    frame.sensor_ids.push_back(static_cast<int>(binio::get_i64(in)));
    Position p;
    p.x = binio::get_f64(in);
    p.y = binio::get_f64(in);
    frame.positions.push_back(p);
  }
  frame.values.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(n));
  for (std::uint64_t k = 0; k < steps; ++k)
    for (std::uint32_t s = 0; s < n; ++s)
      frame.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s)) = binio::get_f64(in);
  return frame;
}

void save_frame(const DatasetFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  save_frame(frame, out);
}

DatasetFrame load_frame(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read " + path.string());
  return load_frame(in);
}

}  // namespace corrsched
