#include "corrsched/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "corrsched/error.hpp"

namespace corrsched {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kInvalidConfig, key + ": expected a number, got '" + text + "'");
}

long long to_integer(const std::string& key, const std::string& text) {
  const double v = to_double(key, text);
  require(v == std::floor(v), ErrorKind::kInvalidConfig, key + ": expected an integer, got '" + text + "'");
  return static_cast<long long>(v);
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  fail(ErrorKind::kInvalidConfig, key + ": expected true/false, got '" + text + "'");
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
  return out;
}

struct Binding {
  std::function<void(const std::string& key, const std::string& text)> set;
  std::function<std::string()> get;
};

// Ordered (section, key) -> accessor table over one config instance.
class Bindings {
 public:
  void number(const std::string& name, double& ref) {
    add(name, {[&ref](const std::string& k, const std::string& t) { ref = to_double(k, t); },
               [&ref] { return format_double(ref); }});
  }
  template <typename Int>
  void integer(const std::string& name, Int& ref) {
    add(name, {[&ref](const std::string& k, const std::string& t) {
                 const auto v = to_integer(k, t);
                 if constexpr (std::is_unsigned_v<Int>)
                   require(v >= 0, ErrorKind::kInvalidConfig, k + ": must be non-negative");
                 ref = static_cast<Int>(v);
               },
               [&ref] { return std::to_string(ref); }});
  }
  void boolean(const std::string& name, bool& ref) {
    add(name, {[&ref](const std::string& k, const std::string& t) { ref = to_bool(k, t); },
               [&ref] { return std::string(ref ? "true" : "false"); }});
  }
  void text(const std::string& name, std::string& ref) {
    add(name, {[&ref](const std::string&, const std::string& t) { ref = t; }, [&ref] { return ref; }});
  }
  void numbers(const std::string& name, std::vector<double>& ref) {
    add(name, {[&ref](const std::string& k, const std::string& t) {
                 try {
                   ref = parse_double_list(t);
                 } catch (const Error& e) {
                   fail(ErrorKind::kInvalidConfig, k + ": " + e.what());
                 }
               },
               [&ref] { return join(ref); }});
  }
  void custom(const std::string& name, Binding b) { add(name, std::move(b)); }

  Binding* find(const std::string& name) {
    const auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }
  const std::vector<std::pair<std::string, Binding>>& entries() const { return entries_; }

 private:
  void add(const std::string& name, Binding b) {
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(b));
  }
  std::vector<std::pair<std::string, Binding>> entries_;
  std::map<std::string, std::size_t> index_;
};

Bindings bind(ExperimentConfig& c) {
  Bindings b;
  auto& s = c.sim;
  b.number("simulation.step_seconds", s.step_seconds);
  b.number("simulation.start_interval_seconds", s.start_interval_seconds);
  b.number("simulation.max_interval_seconds", s.max_interval_seconds);
  b.number("simulation.max_change_seconds", s.max_change_seconds);
  b.number("simulation.target_error", s.target_error);
  b.integer("simulation.seed", s.seed);
  b.custom("simulation.ideal_trigger",
           {[&s](const std::string&, const std::string& t) { s.ideal_trigger = parse_ideal_trigger(t); },
            [&s] { return std::string(to_string(s.ideal_trigger)); }});

  b.number("reward.phi", s.phi);
  b.number("reward.upsilon", s.upsilon);
  b.number("reward.scale", s.reward_scale);
  b.boolean("reward.penalize_overshoot", s.penalize_overshoot);

  b.number("energy.initial_energy_joules", s.energy.initial_energy_joules);
  b.number("energy.continuous_power_watts", s.energy.continuous_power_watts);
  b.number("energy.tx_energy_joules", s.energy.tx_energy_joules);
  b.numbers("energy.initial_fraction", s.initial_energy_fraction);

  b.custom("covariance.mode",
           {[&s](const std::string&, const std::string& t) { s.covariance_mode = parse_covariance_mode(t); },
            [&s] { return std::string(to_string(s.covariance_mode)); }});
  b.custom("covariance.source",
           {[&c](const std::string& k, const std::string& t) {
              if (t == "config") c.model_source = ModelSource::kConfig;
              else if (t == "train") c.model_source = ModelSource::kTrain;
              else fail(ErrorKind::kInvalidConfig, k + ": expected config or train, got '" + t + "'");
            },
            [&c] { return std::string(c.model_source == ModelSource::kConfig ? "config" : "train"); }});
  b.number("covariance.theta_time", s.model.theta_time);
  b.number("covariance.theta_space", s.model.theta_space);
  b.number("covariance.window_seconds", s.window_seconds);
  b.integer("covariance.refit_interval_steps", s.refit_interval_steps);
  b.integer("covariance.grid_steps", s.extraction.grid_steps);
  b.integer("covariance.lag_steps", s.extraction.lag_steps);
  b.integer("covariance.max_lag_bins", s.extraction.max_lag_bins);
  b.number("covariance.distance_bucket_m", s.extraction.distance_bucket_m);
  b.number("covariance.min_correlation", s.extraction.min_correlation);
  b.integer("covariance.min_overlap", s.extraction.min_overlap);

  auto& d = c.ddpg;
  b.custom("ddpg.hidden", {[&d](const std::string& k, const std::string& t) {
                             d.hidden.clear();
                             for (double v : parse_double_list(t)) {
                               require(v >= 1 && v == std::floor(v), ErrorKind::kInvalidConfig,
                                       k + ": layer widths must be positive integers");
                               d.hidden.push_back(static_cast<int>(v));
                             }
                           },
                           [&d] {
                             std::string out;
                             for (std::size_t i = 0; i < d.hidden.size(); ++i)
                               out += (i ? "," : "") + std::to_string(d.hidden[i]);
                             return out;
                           }});
  b.number("ddpg.dropout", d.dropout);
  b.boolean("ddpg.batch_norm", d.batch_norm_first);
  b.number("ddpg.actor_learning_rate", d.actor_learning_rate);
  b.number("ddpg.critic_learning_rate", d.critic_learning_rate);
  b.number("ddpg.tau", d.tau);
  b.number("ddpg.gamma", d.gamma);
  b.integer("ddpg.batch_size", d.batch_size);
  b.integer("ddpg.memory_size", d.memory_size);
  b.integer("ddpg.warmup", d.warmup);
  b.integer("ddpg.updates_per_experience", d.updates_per_experience);
  b.boolean("ddpg.random_warmup", d.random_warmup);
  b.number("ddpg.saturation_bound", d.saturation_bound);
  b.number("ddpg.saturation_penalty", d.saturation_penalty);
  b.number("ddpg.ou_theta", d.ou_theta);
  b.number("ddpg.ou_sigma", d.ou_sigma);
  b.number("ddpg.ou_dt", d.ou_dt);
  b.number("ddpg.ratio_clip", d.ratio_clip);

  auto& q = c.dqn;
  b.number("dqn.learning_rate", q.learning_rate);
  b.number("dqn.gamma", q.gamma);
  b.number("dqn.explore_rate", q.explore_rate);
  b.number("dqn.tau", q.tau);
  b.integer("dqn.batch_size", q.batch_size);
  b.integer("dqn.memory_size", q.memory_size);
  b.integer("dqn.warmup", q.warmup);

  auto& ds = c.dataset;
  b.text("dataset.kind", ds.kind);
  b.text("dataset.path", ds.path);
  b.text("dataset.locations", ds.locations);
  b.text("dataset.channel", ds.channel);
  b.number("dataset.native_period_seconds", ds.native_period_seconds);
  b.number("dataset.train_fraction", ds.train_fraction);
  b.custom("dataset.sensors", {[&ds](const std::string& k, const std::string& t) {
                                 ds.sensors.clear();
                                 for (double v : parse_double_list(t)) {
                                   require(v >= 0 && v == std::floor(v), ErrorKind::kInvalidConfig,
                                           k + ": sensor columns must be non-negative integers");
                                   ds.sensors.push_back(static_cast<std::size_t>(v));
                                 }
                               },
                               [&ds] {
                                 std::string out;
                                 for (std::size_t i = 0; i < ds.sensors.size(); ++i)
                                   out += (i ? "," : "") + std::to_string(ds.sensors[i]);
                                 return out;
                               }});

  auto& y = ds.synthetic;
  b.integer("synthetic.sensors", y.sensors);
  b.number("synthetic.width_m", y.width_m);
  b.number("synthetic.height_m", y.height_m);
  b.number("synthetic.theta_time", y.theta_time);
  b.number("synthetic.theta_space", y.theta_space);
  b.number("synthetic.variance", y.variance);
  b.integer("synthetic.steps", y.steps);
  b.number("synthetic.step_seconds", y.step_seconds);
  b.integer("synthetic.seed", y.seed);
  b.number("synthetic.native_period_seconds", y.native_period_seconds);

  b.integer("training.passes", c.training.passes);
  b.number("training.randomized_energy_fraction", c.training.randomized_energy_fraction);
  b.number("training.energy_min_fraction", c.training.energy_min_fraction);

  auto& p = c.energy_profile;
  b.numbers("energy_profile.group_fractions", p.group_fractions);
  b.numbers("energy_profile.group_levels", p.group_levels);
  b.integer("energy_profile.sweep_group", p.sweep_group);
  b.numbers("energy_profile.sweep_levels", p.sweep_levels);

  b.integer("benchmark.decisions", c.benchmark.decisions);
  return b;
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    require(b != std::string::npos, ErrorKind::kInvalidConfig, "empty list element in '" + text + "'");
    out.push_back(to_double("list", item.substr(b, e - b + 1)));
  }
  return out;
}

void EnergyProfile::validate() const {
  require(!group_fractions.empty() && group_fractions.size() == group_levels.size(), ErrorKind::kInvalidConfig,
          "energy profile needs one level per group");
  double total = 0.0;
  for (double f : group_fractions) {
    require(f > 0.0, ErrorKind::kInvalidConfig, "energy profile group fractions must be positive");
    total += f;
  }
  require(std::abs(total - 1.0) < 1e-9, ErrorKind::kInvalidConfig, "energy profile group fractions must sum to 1");
  for (double l : group_levels)
    require(l > 0.0 && l <= 1.0, ErrorKind::kInvalidConfig, "energy profile levels must lie in (0, 1]");
  require(sweep_group < group_fractions.size(), ErrorKind::kInvalidConfig, "energy profile sweep group out of range");
  for (double l : sweep_levels)
    require(l > 0.0 && l <= 1.0, ErrorKind::kInvalidConfig, "energy profile sweep levels must lie in (0, 1]");
}

void ExperimentConfig::validate() const {
  sim.validate();
  energy_profile.validate();
  require(training.passes >= 1, ErrorKind::kInvalidConfig, "training.passes must be at least 1");
  require(training.randomized_energy_fraction >= 0.0 && training.randomized_energy_fraction <= 1.0,
          ErrorKind::kInvalidConfig, "training.randomized_energy_fraction must lie in [0, 1]");
  require(training.energy_min_fraction > 0.0 && training.energy_min_fraction <= 1.0, ErrorKind::kInvalidConfig,
          "training.energy_min_fraction must lie in (0, 1]");
  require(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0, ErrorKind::kInvalidConfig,
          "dataset.train_fraction must lie in (0, 1)");
  require(dataset.kind == "synthetic" || dataset.kind == "csv" || dataset.kind == "intel" || dataset.kind == "frame",
          ErrorKind::kInvalidConfig, "dataset.kind must be synthetic, csv, intel or frame");
  require(ddpg.batch_size >= 1 && ddpg.memory_size >= ddpg.batch_size && !ddpg.hidden.empty(),
          ErrorKind::kInvalidConfig, "ddpg batch/memory/hidden settings are inconsistent");
  require(dqn.batch_size >= 1 && dqn.memory_size >= dqn.batch_size, ErrorKind::kInvalidConfig,
          "dqn batch/memory settings are inconsistent");
  require(benchmark.decisions >= 1, ErrorKind::kInvalidConfig, "benchmark.decisions must be positive");
}

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::kInvalidConfig, std::string("config syntax: ") + e.what());
  }
  ExperimentConfig config;
  auto bindings = bind(config);
  for (const auto& [section, keys] : tree) {
    require(!keys.empty() || keys.data().empty(), ErrorKind::kInvalidConfig,
            "config key '" + section + "' must sit inside a section");
    for (const auto& [key, value] : keys) {
      const std::string name = section + "." + key;
      Binding* b = bindings.find(name);
      require(b != nullptr, ErrorKind::kInvalidConfig, "unknown config key '" + name + "'");
      b->set(name, value.data());
    }
  }
  config.dqn.seed = config.ddpg.seed = config.sim.seed;
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kInvalidConfig, "cannot read config file " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  const auto bindings = bind(copy);
  std::string section;
  for (const auto& [name, b] : bindings.entries()) {
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    out << name.substr(dot + 1) << " = " << b.get() << "\n";
  }
}

}  // namespace corrsched
