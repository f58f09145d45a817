#pragma once

// Experiment configuration and its JSON form.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pregan/environment.hpp"
#include "pregan/fpe.hpp"
#include "pregan/gan.hpp"
#include "pregan/loop.hpp"

namespace pregan {

struct ExperimentConfig {
  std::size_t m = 16;
  std::size_t n = kFeatureCount;
  std::size_t k = 5;
  std::size_t c = 3;
  std::size_t embed = 8;
  std::size_t heads = 2;
  double interval_seconds = 300.0;
  double lambda = 6.0;
  double alpha = 0.9;
  double epsilon = 0.05;
  double qos_weight = 0.5;
  std::uint64_t seed = 0;
  std::size_t warmup = 5;
  std::size_t fpe_intervals = 1000;
  std::size_t gan_intervals = 1200;
  std::size_t eval_intervals = 100;
  std::vector<HostSpec> hosts;  // empty: default_hosts(m)
  FaultModel faults;
  std::size_t fpe_epochs = 200;
  std::size_t fpe_patience = 10;
  AdamWConfig fpe_optimizer;
  AdamWConfig generator_optimizer;
  AdamWConfig discriminator_optimizer;
  double exploration = 1.5;
  std::size_t replay_capacity = 512;
  std::size_t replay_updates = 16;
  std::size_t cosim_horizon = 1;

  void validate() const {
    if (m == 0 || k == 0 || c == 0 || embed == 0 || heads == 0) throw ParameterError("counts must be positive");
    if (n != kFeatureCount) throw ParameterError("n must be " + std::to_string(kFeatureCount));
    if (c != static_cast<std::size_t>(kFaultClasses)) throw ParameterError("c must be " + std::to_string(kFaultClasses));
    if (!(interval_seconds > 0.0)) throw ParameterError("interval_seconds must be positive");
    if (!(lambda >= 0.0)) throw ParameterError("lambda must be non-negative");
    if (!(alpha > 0.0 && alpha <= 1.0) || !(epsilon >= 0.0 && epsilon < 1.0)) {
      throw ParameterError("alpha must be in (0,1] and epsilon in [0,1)");
    }
    if (!(qos_weight >= 0.0 && qos_weight <= 1.0)) throw ParameterError("qos_weight must be in [0,1]");
    if (!hosts.empty() && hosts.size() != m) throw ParameterError("host table must have m entries");
    for (const auto& h : hosts) h.validate();
    if (cosim_horizon == 0) throw ParameterError("cosim_horizon must be >= 1");
  }

  // Independent random streams derived from `seed`.
  enum class Stream : std::uint64_t {
    kFpeData = 0xc011ec7ULL,
    kGanTraining = 0x6a17a1bULL,
    kEvaluation = 0xe7a1ULL,
    kFpeInit = 0xf9e0ULL,
    kGanInit = 0x6a10ULL,
  };
  std::uint64_t stream(Stream s) const { return mix_seed(seed ^ static_cast<std::uint64_t>(s)); }

  std::vector<HostSpec> host_table() const { return hosts.empty() ? default_hosts(m) : hosts; }

  EnvironmentConfig environment(std::uint64_t stream_seed) const {
    EnvironmentConfig e;
    e.hosts = host_table();
    e.sim.interval_seconds = interval_seconds;
    e.sim.qos_weight = qos_weight;
    e.sim.workload.lambda = lambda;
    e.faults = faults;
    e.window = k;
    e.warmup = warmup;
    e.seed = stream_seed;
    return e;
  }

  FpeConfig fpe() const {
    FpeConfig f;
    f.k = k;
    f.n = n;
    f.c = c;
    f.embed = embed;
    f.heads = heads;
    return f;
  }

  GanConfig gan() const {
    GanConfig g;
    g.embed = embed;
    g.heads = heads;
    return g;
  }

  FpeTrainConfig fpe_training() const {
    FpeTrainConfig t;
    t.max_epochs = fpe_epochs;
    t.patience = fpe_patience;
    t.optimizer = fpe_optimizer;
    t.alpha = alpha;
    t.epsilon = epsilon;
    t.seed = mix_seed(seed ^ 0xf9e1ULL);
    return t;
  }

  GanTrainConfig gan_training() const {
    GanTrainConfig t;
    t.generator_optimizer = generator_optimizer;
    t.discriminator_optimizer = discriminator_optimizer;
    t.exploration = exploration;
    t.replay_capacity = replay_capacity;
    t.replay_updates = replay_updates;
    t.horizon = cosim_horizon;
    t.seed = mix_seed(seed ^ 0x6a11ULL);
    return t;
  }
};

namespace detail {

using json = nlohmann::ordered_json;

template <class T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("config key '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw FormatError("unknown key '" + key + "' in " + where);
  }
}

inline json to_json(const AdamWConfig& a) {
  return json{{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}, {"weight_decay", a.weight_decay}};
}

inline AdamWConfig adamw_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"lr", "beta1", "beta2", "eps", "weight_decay"}, where);
  AdamWConfig a;
  read_key(j, "lr", a.lr);
  read_key(j, "beta1", a.beta1);
  read_key(j, "beta2", a.beta2);
  read_key(j, "eps", a.eps);
  read_key(j, "weight_decay", a.weight_decay);
  return a;
}

inline json to_json(const HostSpec& h) {
  return json{{"cpu_capacity", h.cpu_capacity}, {"ram_capacity", h.ram_capacity},
              {"disk_bandwidth", h.disk_bandwidth}, {"net_bandwidth", h.net_bandwidth},
              {"power_idle", h.power_idle}, {"power_max", h.power_max}};
}

inline HostSpec host_from_json(const json& j) {
  reject_unknown(j, {"cpu_capacity", "ram_capacity", "disk_bandwidth", "net_bandwidth", "power_idle", "power_max"},
                 "host");
  HostSpec h;
  read_key(j, "cpu_capacity", h.cpu_capacity);
  read_key(j, "ram_capacity", h.ram_capacity);
  read_key(j, "disk_bandwidth", h.disk_bandwidth);
  read_key(j, "net_bandwidth", h.net_bandwidth);
  read_key(j, "power_idle", h.power_idle);
  read_key(j, "power_max", h.power_max);
  return h;
}

inline json to_json(const FaultModel& f) {
  return json{{"rate", f.rate},
              {"min_duration", f.min_duration},
              {"max_duration", f.max_duration},
              {"cpu_severity", f.cpu_severity},
              {"ram_severity", f.ram_severity},
              {"net_severity", f.net_severity},
              {"ramp_intervals", f.ramp_intervals},
              {"ramp_factor", f.ramp_factor}};
}

inline FaultModel faults_from_json(const json& j) {
  reject_unknown(j, {"rate", "min_duration", "max_duration", "cpu_severity", "ram_severity", "net_severity",
                     "ramp_intervals", "ramp_factor"},
                 "faults");
  FaultModel f;
  read_key(j, "rate", f.rate);
  read_key(j, "min_duration", f.min_duration);
  read_key(j, "max_duration", f.max_duration);
  read_key(j, "cpu_severity", f.cpu_severity);
  read_key(j, "ram_severity", f.ram_severity);
  read_key(j, "net_severity", f.net_severity);
  read_key(j, "ramp_intervals", f.ramp_intervals);
  read_key(j, "ramp_factor", f.ramp_factor);
  return f;
}

}  // namespace detail

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  using detail::json;
  json hosts = json::array();
  for (const auto& h : c.hosts) hosts.push_back(detail::to_json(h));
  return json{{"m", c.m},
              {"n", c.n},
              {"k", c.k},
              {"c", c.c},
              {"E", c.embed},
              {"heads", c.heads},
              {"interval_seconds", c.interval_seconds},
              {"lambda", c.lambda},
              {"alpha", c.alpha},
              {"epsilon", c.epsilon},
              {"qos_weight_w", c.qos_weight},
              {"seed", c.seed},
              {"warmup", c.warmup},
              {"fpe_intervals", c.fpe_intervals},
              {"gan_intervals", c.gan_intervals},
              {"eval_intervals", c.eval_intervals},
              {"hosts", hosts},
              {"faults", detail::to_json(c.faults)},
              {"fpe_epochs", c.fpe_epochs},
              {"fpe_patience", c.fpe_patience},
              {"fpe_optimizer", detail::to_json(c.fpe_optimizer)},
              {"generator_optimizer", detail::to_json(c.generator_optimizer)},
              {"discriminator_optimizer", detail::to_json(c.discriminator_optimizer)},
              {"exploration", c.exploration},
              {"replay_capacity", c.replay_capacity},
              {"replay_updates", c.replay_updates},
              {"cosim_horizon", c.cosim_horizon}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::ordered_json& j) {
  using detail::read_key;
  detail::reject_unknown(j,
                         {"m", "n", "k", "c", "E", "heads", "interval_seconds", "lambda", "alpha", "epsilon",
                          "qos_weight_w", "seed", "warmup", "fpe_intervals", "gan_intervals", "eval_intervals", "hosts",
                          "faults", "fpe_epochs", "fpe_patience", "fpe_optimizer", "generator_optimizer",
                          "discriminator_optimizer", "exploration", "replay_capacity", "replay_updates",
                          "cosim_horizon"},
                         "config");
  ExperimentConfig c;
  read_key(j, "m", c.m);
  read_key(j, "n", c.n);
  read_key(j, "k", c.k);
  read_key(j, "c", c.c);
  read_key(j, "E", c.embed);
  read_key(j, "heads", c.heads);
  read_key(j, "interval_seconds", c.interval_seconds);
  read_key(j, "lambda", c.lambda);
  read_key(j, "alpha", c.alpha);
  read_key(j, "epsilon", c.epsilon);
  read_key(j, "qos_weight_w", c.qos_weight);
  read_key(j, "seed", c.seed);
  read_key(j, "warmup", c.warmup);
  read_key(j, "fpe_intervals", c.fpe_intervals);
  read_key(j, "gan_intervals", c.gan_intervals);
  read_key(j, "eval_intervals", c.eval_intervals);
  if (j.contains("hosts")) {
    if (!j["hosts"].is_array()) throw FormatError("hosts must be an array");
    for (const auto& h : j["hosts"]) c.hosts.push_back(detail::host_from_json(h));
  }
  if (j.contains("faults")) c.faults = detail::faults_from_json(j["faults"]);
  read_key(j, "fpe_epochs", c.fpe_epochs);
  read_key(j, "fpe_patience", c.fpe_patience);
  if (j.contains("fpe_optimizer")) c.fpe_optimizer = detail::adamw_from_json(j["fpe_optimizer"], "fpe_optimizer");
  if (j.contains("generator_optimizer")) {
    c.generator_optimizer = detail::adamw_from_json(j["generator_optimizer"], "generator_optimizer");
  }
  if (j.contains("discriminator_optimizer")) {
    c.discriminator_optimizer = detail::adamw_from_json(j["discriminator_optimizer"], "discriminator_optimizer");
  }
  read_key(j, "exploration", c.exploration);
  read_key(j, "replay_capacity", c.replay_capacity);
  read_key(j, "replay_updates", c.replay_updates);
  read_key(j, "cosim_horizon", c.cosim_horizon);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace pregan
