#pragma once

// Deterministic discrete-interval simulator of a heterogeneous edge cluster.
//
// Every interval is integrated on a fixed grid of sub-ticks. Within a
// sub-tick each host shares its (fault-reduced) compute among resident tasks
// in proportion to their rate caps, network-bound work is throttled by the
// available receive bandwidth, and RAM over-commit slows every resident task.
// Threshold conditions are tracked per sub-tick to produce ground-truth fault
// labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pregan/errors.hpp"
#include "pregan/schedule.hpp"

namespace pregan {

enum class AppClass : std::uint8_t { kA = 0, kB = 1, kC = 2 };
inline constexpr std::size_t kAppClasses = 3;

// Label values: 0 means healthy.
enum class FaultClass : std::uint8_t { kNone = 0, kCpu = 1, kRam = 2, kNetwork = 3 };
inline constexpr int kFaultClasses = 3;

inline const char* app_class_name(AppClass a) {
  switch (a) {
    case AppClass::kA: return "A";
    case AppClass::kB: return "B";
    case AppClass::kC: return "C";
  }
  return "?";
}

inline const char* fault_class_name(FaultClass f) {
  switch (f) {
    case FaultClass::kNone: return "none";
    case FaultClass::kCpu: return "cpu";
    case FaultClass::kRam: return "ram";
    case FaultClass::kNetwork: return "network";
  }
  return "?";
}

struct HostSpec {
  double cpu_capacity = 1200.0;  // compute units (core-seconds) per interval
  double ram_capacity = 4096.0;  // MB
  double disk_bandwidth = 40.0;  // MB/s
  double net_bandwidth = 100.0;  // MB/s
  double power_idle = 2.7;       // W
  double power_max = 6.4;        // W

  void validate() const {
    if (!(cpu_capacity > 0 && ram_capacity > 0 && disk_bandwidth > 0 && net_bandwidth > 0)) {
      throw ParameterError("host capacities must be positive");
    }
    if (!(power_idle >= 0 && power_max >= power_idle)) {
      throw ParameterError("host power envelope must satisfy 0 <= idle <= max");
    }
  }
};

struct Task {
  std::int64_t id = 0;
  AppClass app_class = AppClass::kA;
  double total_demand = 0.0;   // compute units
  double ram_footprint = 0.0;  // MB
  double io_intensity = 0.0;   // fraction of work bound on network I/O
  std::int64_t arrival_interval = 0;
  double deadline = 1.0;  // seconds after arrival
  double progress = 0.0;  // compute units completed
  double max_rate = 1.0;  // compute units per second the container can absorb
};

struct PlacedTask {
  Task task;
  int host = 0;
};

// Raw per-host feature order.
enum Feature : std::size_t {
  kCpuUtil = 0,
  kRamUtil,
  kDiskRead,
  kDiskWrite,
  kNetTx,
  kNetRx,
  kContainers,
  kPower,
};
inline constexpr std::size_t kFeatureCount = 8;
using FeatureRow = std::array<double, kFeatureCount>;

struct FaultEvent {
  std::size_t host = 0;
  std::int64_t start_interval = 0;
  std::int64_t duration = 1;
  FaultClass fault = FaultClass::kCpu;
  double severity = 1.0;
};

// Injected faults. The first `ramp_intervals` of every event run at
// `ramp_factor` of the event severity with no memory leak, so incipient
// degradation is observable before thresholds trip.
struct FaultPlan {
  std::vector<FaultEvent> events;
  std::int64_t ramp_intervals = 1;
  double ramp_factor = 0.5;

  void validate(std::size_t m) const {
    for (const auto& e : events) {
      if (e.host >= m) throw ParameterError("fault event on nonexistent host");
      if (e.duration < 1) throw ParameterError("fault duration must be >= 1");
      if (!(e.severity > 0.0 && e.severity <= 1.0)) throw ParameterError("fault severity must be in (0,1]");
      if (e.fault == FaultClass::kNone) throw ParameterError("fault event without class");
    }
  }
};

struct CompletedTask {
  std::int64_t id = 0;
  AppClass app_class = AppClass::kA;
  double response_time = 0.0;
  bool slo_violated = false;
};

struct IntervalRecord {
  std::int64_t interval_index = 0;
  std::vector<FeatureRow> raw_features;  // m x n, before normalization
  double energy_wh = 0.0;
  std::vector<CompletedTask> completed;
  // Tasks still running at the end of the interval, and those among them
  // already past their deadline or projected to miss it at their current rate.
  std::size_t running = 0;
  std::size_t running_at_risk = 0;
  std::size_t migration_count = 0;
  double migration_time_s = 0.0;
  std::vector<int> labels;

  std::size_t slo_violations() const {
    return static_cast<std::size_t>(std::count_if(completed.begin(), completed.end(),
                                                  [](const CompletedTask& c) { return c.slo_violated; }));
  }
  bool operator==(const IntervalRecord&) const = default;
};

inline bool operator==(const CompletedTask& a, const CompletedTask& b) {
  return a.id == b.id && a.app_class == b.app_class && a.response_time == b.response_time &&
         a.slo_violated == b.slo_violated;
}

// Per-class task parameter ranges, sampled uniformly.
struct TaskProfile {
  double demand_lo, demand_hi;
  double ram_lo, ram_hi;
  double io_lo, io_hi;
  double max_rate;
  double slack_lo, slack_hi;  // deadline = slack * demand / max_rate
};

struct WorkloadModel {
  double lambda = 6.0;
  std::array<TaskProfile, kAppClasses> profiles = {{
      {900.0, 2400.0, 400.0, 900.0, 0.1, 0.3, 2.0, 1.5, 2.5},  // A: compute heavy
      {600.0, 1500.0, 300.0, 600.0, 0.2, 0.5, 1.5, 1.5, 2.5},  // B: mixed
      {400.0, 1000.0, 150.0, 400.0, 0.5, 0.9, 1.0, 1.5, 2.5},  // C: I/O heavy
  }};
};

struct SimConfig {
  double interval_seconds = 300.0;
  std::size_t subticks = 20;
  double sustain_seconds = 60.0;
  double cpu_threshold = 0.90;
  double ram_threshold = 0.90;
  double net_threshold = 0.90;
  // Memory leak while a RAM fault is active: leak_mb per leak_period_s, scaled by severity.
  double leak_mb = 1.0;
  double leak_period_s = 3.0;
  // Abnormal allocation held by an active RAM fault, as a fraction of capacity times severity.
  double ram_fault_alloc_fraction = 0.8;
  // Per-task I/O rates at io_intensity = 1 (MB/s).
  double net_rx_rate = 12.0;
  double net_tx_rate = 6.0;
  double disk_read_rate = 8.0;
  double disk_write_rate = 4.0;
  double max_containers = 12.0;  // normalization bound for the container count
  double qos_weight = 0.5;
  WorkloadModel workload;

  double subtick_seconds() const { return interval_seconds / static_cast<double>(subticks); }
};

struct ClusterState {
  std::vector<HostSpec> hosts;
  std::vector<PlacedTask> active;
  std::vector<double> leaked_ram;
  std::int64_t interval_index = 0;
  std::int64_t next_task_id = 0;
  std::mt19937_64 rng;

  static ClusterState create(std::vector<HostSpec> hosts, std::uint64_t seed) {
    for (const auto& h : hosts) h.validate();
    ClusterState s;
    s.leaked_ram.assign(hosts.size(), 0.0);
    s.hosts = std::move(hosts);
    s.rng.seed(seed);
    return s;
  }

  std::size_t host_count() const { return hosts.size(); }
};

// ---------------------------------------------------------------------------
// Workload generation
// ---------------------------------------------------------------------------

// Poisson(lambda) new tasks, app class uniform over {A, B, C}.
inline std::vector<Task> generate_workloads(std::mt19937_64& rng, double lambda,
                                            std::int64_t interval_index, std::int64_t& next_id,
                                            const WorkloadModel& model = {}) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be >= 0");
  std::vector<Task> out;
  if (lambda == 0.0) return out;
  std::poisson_distribution<int> count_dist(lambda);
  const int count = count_dist(rng);
  std::uniform_int_distribution<int> class_dist(0, static_cast<int>(kAppClasses) - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  for (int i = 0; i < count; ++i) {
    Task t;
    t.id = next_id++;
    t.app_class = static_cast<AppClass>(class_dist(rng));
    const TaskProfile& p = model.profiles[static_cast<std::size_t>(t.app_class)];
    t.total_demand = draw(p.demand_lo, p.demand_hi);
    t.ram_footprint = draw(p.ram_lo, p.ram_hi);
    t.io_intensity = draw(p.io_lo, p.io_hi);
    t.max_rate = p.max_rate;
    t.deadline = draw(p.slack_lo, p.slack_hi) * t.total_demand / p.max_rate;
    t.arrival_interval = interval_index;
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fault effects
// ---------------------------------------------------------------------------

struct HostFaultEffect {
  double cpu_severity = 0.0;
  double net_severity = 0.0;
  double ram_alloc_severity = 0.0;
  double leak_severity = 0.0;  // > 0 only in the main phase of a RAM fault
};

inline std::vector<HostFaultEffect> fault_effects(const FaultPlan& plan, std::size_t m,
                                                  std::int64_t interval) {
  std::vector<HostFaultEffect> eff(m);
  for (const auto& e : plan.events) {
    if (e.host >= m || interval < e.start_interval || interval >= e.start_interval + e.duration) continue;
    const bool ramp = interval < e.start_interval + plan.ramp_intervals;
    const double sev = ramp ? e.severity * plan.ramp_factor : e.severity;
    auto& h = eff[e.host];
    switch (e.fault) {
      case FaultClass::kCpu: h.cpu_severity = std::max(h.cpu_severity, sev); break;
      case FaultClass::kNetwork: h.net_severity = std::max(h.net_severity, sev); break;
      case FaultClass::kRam:
        h.ram_alloc_severity = std::max(h.ram_alloc_severity, sev);
        if (!ramp) h.leak_severity = std::max(h.leak_severity, sev);
        break;
      case FaultClass::kNone: break;
    }
  }
  return eff;
}

// ---------------------------------------------------------------------------
// Interval integration
// ---------------------------------------------------------------------------

struct StepResult {
  ClusterState state;
  IntervalRecord record;
};

namespace detail {

struct RunState {
  int run = 0;
  bool fired = false;
  void observe(bool cond, int needed) {
    run = cond ? run + 1 : 0;
    if (run >= needed) fired = true;
  }
};

inline void validate_schedule(const ClusterState& state, const Schedule& schedule,
                              const std::vector<Task>& arrivals) {
  const std::size_t m = state.host_count();
  if (schedule.hosts != m) {
    throw ScheduleError("schedule has " + std::to_string(schedule.hosts) + " host columns, cluster has " +
                        std::to_string(m));
  }
  if (schedule.matrix.size() != schedule.tasks() * m) throw ScheduleError("schedule matrix size mismatch");
  if (!schedule.is_one_hot()) throw ScheduleError("executed schedule rows must be one-hot");
  if (schedule.tasks() != state.active.size() + arrivals.size()) {
    throw ScheduleError("schedule must place every active and arriving task exactly once");
  }
  for (std::size_t r = 0; r < state.active.size(); ++r) {
    if (schedule.task_ids[r] != state.active[r].task.id) throw ScheduleError("schedule rows out of task order");
  }
  for (std::size_t r = 0; r < arrivals.size(); ++r) {
    if (schedule.task_ids[state.active.size() + r] != arrivals[r].id) {
      throw ScheduleError("schedule rows out of task order");
    }
  }
}

}  // namespace detail

// Advances the cluster by one interval under `schedule`, whose rows list the
// active tasks (in state order) followed by `arrivals`.
inline StepResult step_interval(const ClusterState& state, const Schedule& schedule,
                                const std::vector<Task>& arrivals, const FaultPlan& plan,
                                const SimConfig& cfg = {}) {
  detail::validate_schedule(state, schedule, arrivals);
  const std::size_t m = state.host_count();
  const std::int64_t t = state.interval_index;
  const double interval = cfg.interval_seconds;
  const double dt = cfg.subtick_seconds();
  const int sustain_ticks = static_cast<int>(std::ceil(cfg.sustain_seconds / dt - 1e-9));

  StepResult out{state, {}};
  ClusterState& next = out.state;
  IntervalRecord& rec = out.record;
  rec.interval_index = t;
  rec.raw_features.assign(m, FeatureRow{});
  rec.labels.assign(m, 0);

  const auto effects = fault_effects(plan, m, t);
  const std::vector<int> placement = schedule.placements();

  // Placement and migrations. Migration downtime blocks progress at the start
  // of the interval.
  std::vector<PlacedTask> tasks = state.active;
  for (const Task& a : arrivals) tasks.push_back({a, placement[tasks.size()]});
  std::vector<double> blocked(tasks.size(), 0.0);
  for (std::size_t r = 0; r < state.active.size(); ++r) {
    const int dst = placement[r];
    const int src = tasks[r].host;
    if (dst == src) continue;
    const auto bw = [&](int h) {
      const auto hh = static_cast<std::size_t>(h);
      return state.hosts[hh].net_bandwidth * (1.0 - effects[hh].net_severity);
    };
    const double link = std::max(std::min(bw(src), bw(dst)), 1e-6);
    const double downtime = std::min(tasks[r].task.ram_footprint / link, interval);
    blocked[r] = downtime;
    tasks[r].host = dst;
    rec.migration_count += 1;
    rec.migration_time_s += downtime;
  }

  std::vector<double> start_progress(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) start_progress[i] = tasks[i].task.progress;
  std::vector<double> finish_offset(tasks.size(), -1.0);

  std::vector<std::vector<std::size_t>> resident(m);
  for (std::size_t i = 0; i < tasks.size(); ++i) resident[static_cast<std::size_t>(tasks[i].host)].push_back(i);

  std::vector<detail::RunState> cpu_run(m), ram_run(m), net_run(m);
  std::vector<double> leaked = state.leaked_ram;
  const double ticks = static_cast<double>(cfg.subticks);

  for (std::size_t s = 0; s < cfg.subticks; ++s) {
    const double t0 = static_cast<double>(s) * dt;
    for (std::size_t h = 0; h < m; ++h) {
      const HostSpec& host = state.hosts[h];
      const HostFaultEffect& fx = effects[h];
      if (fx.leak_severity > 0.0) leaked[h] += fx.leak_severity * cfg.leak_mb * dt / cfg.leak_period_s;

      const double cap_rate = host.cpu_capacity / interval;
      const double cpu_avail = cap_rate * (1.0 - fx.cpu_severity);
      const double rx_avail = host.net_bandwidth * (1.0 - fx.net_severity);

      double requested = 0.0, rx_demand = 0.0, ram_used = leaked[h];
      ram_used += fx.ram_alloc_severity * cfg.ram_fault_alloc_fraction * host.ram_capacity;
      std::size_t containers = 0;
      std::vector<double> active_frac(resident[h].size(), 0.0);
      for (std::size_t k = 0; k < resident[h].size(); ++k) {
        const std::size_t i = resident[h][k];
        if (finish_offset[i] >= 0.0) continue;
        ++containers;
        ram_used += tasks[i].task.ram_footprint;
        const double start = std::max(t0, blocked[i]);
        active_frac[k] = std::clamp((t0 + dt - start) / dt, 0.0, 1.0);
        requested += tasks[i].task.max_rate * active_frac[k];
        rx_demand += tasks[i].task.io_intensity * cfg.net_rx_rate * active_frac[k];
      }
      const double share = requested > cpu_avail ? cpu_avail / requested : 1.0;
      const double io_share = rx_demand > rx_avail ? rx_avail / rx_demand : 1.0;
      const double ram_factor = ram_used > host.ram_capacity ? host.ram_capacity / ram_used : 1.0;

      double cpu_used = cap_rate * fx.cpu_severity * dt;
      double rx = host.net_bandwidth * fx.net_severity * dt;
      double tx = 0.0, disk_r = 0.0, disk_w = 0.0;
      for (std::size_t k = 0; k < resident[h].size(); ++k) {
        const std::size_t i = resident[h][k];
        if (finish_offset[i] >= 0.0 || active_frac[k] <= 0.0) continue;
        Task& task = tasks[i].task;
        const double active_s = active_frac[k] * dt;
        const double granted = task.max_rate * share;
        const double io = task.io_intensity;
        const double rate = granted * ((1.0 - io) + io * io_share) * ram_factor;
        const double remaining = task.total_demand - task.progress;
        double used_s = active_s;
        if (rate > 0.0 && remaining <= rate * active_s * (1.0 + 1e-12)) {
          used_s = std::min(remaining / rate, active_s);
          task.progress = task.total_demand;
          finish_offset[i] = t0 + (dt - active_s) + used_s;
        } else {
          task.progress += rate * active_s;
        }
        cpu_used += granted * used_s;
        rx += io * cfg.net_rx_rate * io_share * used_s;
        tx += io * cfg.net_tx_rate * io_share * used_s;
        disk_r += io * cfg.disk_read_rate * used_s;
        disk_w += io * cfg.disk_write_rate * used_s;
      }

      const double cpu_util = std::min(cpu_used / (cap_rate * dt), 1.0);
      const double ram_util = ram_used / host.ram_capacity;
      const double net_util = std::max(rx, tx) / (host.net_bandwidth * dt);
      const double power = host.power_idle + (host.power_max - host.power_idle) * cpu_util;
      rec.energy_wh += power * dt / 3600.0;

      FeatureRow& f = rec.raw_features[h];
      f[kCpuUtil] += cpu_util * cap_rate * dt;
      f[kRamUtil] += std::min(ram_used, host.ram_capacity) / ticks;
      f[kDiskRead] += disk_r / interval;
      f[kDiskWrite] += disk_w / interval;
      f[kNetTx] += tx / interval;
      f[kNetRx] += rx / interval;
      f[kContainers] += static_cast<double>(containers) / ticks;
      f[kPower] += power / ticks;

      cpu_run[h].observe(cpu_util > cfg.cpu_threshold, sustain_ticks);
      ram_run[h].observe(fx.leak_severity > 0.0 || ram_util > cfg.ram_threshold, sustain_ticks);
      net_run[h].observe(net_util > cfg.net_threshold, sustain_ticks);
    }
  }

  for (std::size_t h = 0; h < m; ++h) {
    if (cpu_run[h].fired) {
      rec.labels[h] = static_cast<int>(FaultClass::kCpu);
    } else if (ram_run[h].fired) {
      rec.labels[h] = static_cast<int>(FaultClass::kRam);
    } else if (net_run[h].fired) {
      rec.labels[h] = static_cast<int>(FaultClass::kNetwork);
    }
    // Leaked memory is reclaimed once the faulty process is gone.
    if (effects[h].leak_severity <= 0.0) leaked[h] = 0.0;
  }

  next.active.clear();
  const double interval_start = static_cast<double>(t) * interval;
  const double interval_end = interval_start + interval;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& task = tasks[i].task;
    const double arrival = static_cast<double>(task.arrival_interval) * interval;
    if (finish_offset[i] >= 0.0) {
      const double response = interval_start + finish_offset[i] - arrival;
      rec.completed.push_back({task.id, task.app_class, response, response > task.deadline});
      continue;
    }
    rec.running += 1;
    const double rate = (task.progress - start_progress[i]) / interval;
    const double remaining = task.total_demand - task.progress;
    const bool at_risk = interval_end - arrival > task.deadline || rate <= 0.0 ||
                         interval_end + remaining / rate - arrival > task.deadline;
    if (at_risk) rec.running_at_risk += 1;
    next.active.push_back(tasks[i]);
  }
  next.leaked_ram = std::move(leaked);
  next.interval_index = t + 1;
  return out;
}

// ---------------------------------------------------------------------------
// QoS scoring
// ---------------------------------------------------------------------------

struct QosTerms {
  double energy_norm = 0.0;
  double slo_fraction = 0.0;
};

// Energy normalized by the all-hosts-at-max envelope; the SLO term counts
// late completions plus running tasks that are overdue or projected late.
inline QosTerms qos_terms(const std::vector<IntervalRecord>& records, const std::vector<HostSpec>& hosts,
                          double interval_seconds) {
  double energy = 0.0, pmax = 0.0, bad = 0.0, total = 0.0;
  for (const auto& h : hosts) pmax += h.power_max;
  for (const auto& r : records) {
    energy += r.energy_wh;
    bad += static_cast<double>(r.slo_violations() + r.running_at_risk);
    total += static_cast<double>(r.completed.size() + r.running);
  }
  const double envelope = pmax * static_cast<double>(records.size()) * interval_seconds / 3600.0;
  return {envelope > 0.0 ? energy / envelope : 0.0, total > 0.0 ? bad / total : 0.0};
}

// Higher is better.
inline double qos_score(const std::vector<IntervalRecord>& records, const std::vector<HostSpec>& hosts,
                        const SimConfig& cfg) {
  const QosTerms q = qos_terms(records, hosts, cfg.interval_seconds);
  return -(cfg.qos_weight * q.energy_norm + (1.0 - cfg.qos_weight) * q.slo_fraction);
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

// k x m x n tensor of normalized features, oldest interval first.
struct MetricsWindow {
  std::size_t k = 0, m = 0, n = kFeatureCount;
  std::vector<float> data;

  float at(std::size_t step, std::size_t host, std::size_t feature) const {
    return data[(step * m + host) * n + feature];
  }
};

// Per-host normalization bounds for the raw feature order.
inline FeatureRow feature_bounds(const HostSpec& h, const SimConfig& cfg) {
  return {h.cpu_capacity, h.ram_capacity, h.disk_bandwidth, h.disk_bandwidth,
          h.net_bandwidth, h.net_bandwidth, cfg.max_containers, h.power_max};
}

// Divides each raw feature by its capacity bound and clamps to [0, 1].
inline MetricsWindow normalize_window(const std::vector<std::vector<FeatureRow>>& raw,
                                      const std::vector<FeatureRow>& bounds) {
  MetricsWindow w;
  w.k = raw.size();
  w.m = bounds.size();
  w.data.reserve(w.k * w.m * w.n);
  for (const auto& step : raw) {
    if (step.size() != w.m) throw DataError("window step host count mismatch");
    for (std::size_t h = 0; h < w.m; ++h) {
      for (std::size_t f = 0; f < w.n; ++f) {
        const double v = step[h][f];
        if (std::isnan(v)) throw DataError("NaN in raw features");
        if (v < 0.0) throw DataError("negative raw feature");
        w.data.push_back(static_cast<float>(std::clamp(v / bounds[h][f], 0.0, 1.0)));
      }
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Snapshots and co-simulation
// ---------------------------------------------------------------------------

// Everything needed to replay the pending interval: cluster state (including
// the workload RNG), the interval's arrivals, the fault plan and config.
class Snapshot {
 public:
  Snapshot(ClusterState state, std::vector<Task> arrivals, std::shared_ptr<const FaultPlan> plan,
           SimConfig cfg)
      : state_(std::move(state)), arrivals_(std::move(arrivals)), plan_(std::move(plan)), cfg_(std::move(cfg)) {}

  const ClusterState& state() const { return state_; }
  const std::vector<Task>& arrivals() const { return arrivals_; }
  const FaultPlan& plan() const { return *plan_; }
  const SimConfig& config() const { return cfg_; }

 private:
  ClusterState state_;
  std::vector<Task> arrivals_;
  std::shared_ptr<const FaultPlan> plan_;
  SimConfig cfg_;
};

inline Snapshot snapshot(const ClusterState& state, std::vector<Task> arrivals,
                         std::shared_ptr<const FaultPlan> plan, const SimConfig& cfg) {
  return Snapshot(state, std::move(arrivals), std::move(plan), cfg);
}

// Projected CPU utilization used by the least-loaded placement policy:
// last-interval utilization (including fault load) plus the queued demand
// rates of resident tasks.
inline std::vector<double> projected_cpu_load(const ClusterState& state,
                                              const std::vector<double>& measured_util,
                                              const SimConfig& cfg) {
  const std::size_t m = state.host_count();
  std::vector<double> load(m, 0.0);
  std::vector<double> task_share(m, 0.0);
  for (const auto& p : state.active) {
    const auto h = static_cast<std::size_t>(p.host);
    task_share[h] += p.task.max_rate * cfg.interval_seconds / state.hosts[h].cpu_capacity;
  }
  for (std::size_t h = 0; h < m; ++h) {
    const double measured = h < measured_util.size() ? measured_util[h] : 0.0;
    load[h] = std::max(measured, task_share[h]);
  }
  return load;
}

// Least-loaded first-fit: active tasks keep their host, each arrival goes to
// the host with the lowest projected CPU utilization (ties to lowest index).
inline Schedule least_loaded_schedule(const ClusterState& state, const std::vector<Task>& arrivals,
                                      const std::vector<double>& measured_util, const SimConfig& cfg) {
  const std::size_t m = state.host_count();
  std::vector<double> load = projected_cpu_load(state, measured_util, cfg);
  std::vector<std::int64_t> ids;
  std::vector<int> previous, placement;
  for (const auto& p : state.active) {
    ids.push_back(p.task.id);
    previous.push_back(p.host);
    placement.push_back(p.host);
  }
  for (const auto& a : arrivals) {
    std::size_t best = 0;
    for (std::size_t h = 1; h < m; ++h)
      if (load[h] < load[best]) best = h;
    ids.push_back(a.id);
    previous.push_back(-1);
    placement.push_back(static_cast<int>(best));
    load[best] += a.max_rate * cfg.interval_seconds / state.hosts[best].cpu_capacity;
  }
  return Schedule::from_placements(m, std::move(ids), std::move(previous), placement);
}

inline std::vector<double> measured_cpu_util(const IntervalRecord& rec, const std::vector<HostSpec>& hosts) {
  std::vector<double> u(hosts.size(), 0.0);
  for (std::size_t h = 0; h < hosts.size() && h < rec.raw_features.size(); ++h)
    u[h] = rec.raw_features[h][kCpuUtil] / hosts[h].cpu_capacity;
  return u;
}

// Replays the snapshot's interval under `schedule` and returns the QoS score.
// Later intervals of a longer horizon draw arrivals from the snapshot RNG and
// place them with the least-loaded policy.
inline double cosimulate(const Snapshot& snap, const Schedule& schedule, std::size_t horizon = 1) {
  if (horizon < 1) throw ParameterError("co-simulation horizon must be >= 1");
  std::vector<IntervalRecord> records;
  StepResult step = step_interval(snap.state(), schedule, snap.arrivals(), snap.plan(), snap.config());
  records.push_back(step.record);
  ClusterState state = std::move(step.state);
  for (std::size_t i = 1; i < horizon; ++i) {
    auto arrivals = generate_workloads(state.rng, snap.config().workload.lambda, state.interval_index,
                                       state.next_task_id, snap.config().workload);
    const Schedule next =
        least_loaded_schedule(state, arrivals, measured_cpu_util(records.back(), state.hosts), snap.config());
    StepResult s = step_interval(state, next, arrivals, snap.plan(), snap.config());
    records.push_back(s.record);
    state = std::move(s.state);
  }
  return qos_score(records, snap.state().hosts, snap.config());
}

// ---------------------------------------------------------------------------
// Fault plan generation
// ---------------------------------------------------------------------------

struct FaultModel {
  // Probability per healthy host per interval that a new event starts.
  double rate = 0.02;
  std::int64_t min_duration = 6;
  std::int64_t max_duration = 16;
  std::array<double, 2> cpu_severity = {0.90, 0.98};
  std::array<double, 2> ram_severity = {0.70, 0.95};
  std::array<double, 2> net_severity = {0.90, 0.98};
  std::int64_t ramp_intervals = 1;
  double ramp_factor = 0.5;
};

inline FaultPlan generate_fault_plan(std::uint64_t seed, std::size_t m, std::int64_t intervals,
                                     const FaultModel& model) {
  if (model.rate < 0.0 || model.rate > 1.0) throw ParameterError("fault rate must be in [0,1]");
  if (model.min_duration < 1 || model.max_duration < model.min_duration) {
    throw ParameterError("invalid fault duration range");
  }
  FaultPlan plan;
  plan.ramp_intervals = model.ramp_intervals;
  plan.ramp_factor = model.ramp_factor;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> dur(model.min_duration, model.max_duration);
  std::uniform_int_distribution<int> cls(1, kFaultClasses);
  for (std::size_t h = 0; h < m; ++h) {
    std::int64_t t = 0;
    while (t < intervals) {
      if (unit(rng) < model.rate) {
        FaultEvent e;
        e.host = h;
        e.start_interval = t;
        e.duration = dur(rng);
        e.fault = static_cast<FaultClass>(cls(rng));
        const auto& range = e.fault == FaultClass::kCpu   ? model.cpu_severity
                            : e.fault == FaultClass::kRam ? model.ram_severity
                                                          : model.net_severity;
        e.severity = range[0] + (range[1] - range[0]) * unit(rng);
        plan.events.push_back(e);
        t += e.duration;
      } else {
        t += 1;
      }
    }
  }
  std::stable_sort(plan.events.begin(), plan.events.end(), [](const FaultEvent& a, const FaultEvent& b) {
    return a.start_interval < b.start_interval;
  });
  return plan;
}

// Default heterogeneous cluster: the first half of the hosts have 4 GB of
// RAM, the second half 8 GB with a slightly higher power envelope.
inline std::vector<HostSpec> default_hosts(std::size_t m) {
  std::vector<HostSpec> hosts(m);
  for (std::size_t h = 0; h < m; ++h) {
    if (h >= m / 2) {
      hosts[h].ram_capacity = 8192.0;
      hosts[h].power_idle = 3.0;
      hosts[h].power_max = 7.0;
    }
  }
  return hosts;
}

}  // namespace pregan
