#pragma once

// Closed-loop plumbing shared by dataset collection, training and evaluation:
// a live cluster with its fault plan, the sliding metrics window and the
// baseline placement policy.

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "pregan/fpe.hpp"
#include "pregan/sim.hpp"

namespace pregan {

// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct EnvironmentConfig {
  std::vector<HostSpec> hosts = default_hosts(16);
  SimConfig sim;
  FaultModel faults;
  std::size_t window = 5;
  std::uint64_t seed = 0;
  // Intervals run with the baseline before the first recorded one, so the
  // first window holds real history.
  std::size_t warmup = 5;
};

// One interval awaiting a decision.
struct PendingInterval {
  std::vector<Task> arrivals;
  Schedule baseline;
  MetricsWindow window;
  ScheduleGraph graph;
};

class Environment {
 public:
  Environment(const EnvironmentConfig& cfg, std::int64_t horizon)
      : cfg_(cfg),
        plan_(std::make_shared<FaultPlan>(generate_fault_plan(mix_seed(cfg.seed ^ 0xfa017ULL), cfg.hosts.size(),
                                                              horizon + static_cast<std::int64_t>(cfg.warmup),
                                                              cfg.faults))),
        state_(ClusterState::create(cfg.hosts, mix_seed(cfg.seed))) {
    if (cfg.window == 0) throw ParameterError("window length must be >= 1");
    for (const auto& h : cfg.hosts) bounds_.push_back(feature_bounds(h, cfg.sim));
    util_.assign(cfg.hosts.size(), 0.0);
    for (std::size_t i = 0; i < cfg.warmup; ++i) {
      auto p = prepare();
      execute(p, p.baseline);
    }
  }

  std::size_t hosts() const { return state_.host_count(); }
  const ClusterState& state() const { return state_; }
  const SimConfig& sim() const { return cfg_.sim; }
  const std::shared_ptr<const FaultPlan>& plan() const { return plan_; }

  // Draws this interval's arrivals and the least-loaded schedule.
  PendingInterval prepare() {
    PendingInterval p;
    p.arrivals =
        generate_workloads(state_.rng, cfg_.sim.workload.lambda, state_.interval_index, state_.next_task_id,
                           cfg_.sim.workload);
    p.baseline = least_loaded_schedule(state_, p.arrivals, util_, cfg_.sim);
    p.window = current_window();
    p.graph = schedule_graph(p.baseline, cfg_.sim.max_containers);
    return p;
  }

  Snapshot snapshot_for(const PendingInterval& p) const { return snapshot(state_, p.arrivals, plan_, cfg_.sim); }

  IntervalRecord execute(const PendingInterval& p, const Schedule& schedule) {
    auto r = step_interval(state_, schedule, p.arrivals, *plan_, cfg_.sim);
    util_ = measured_cpu_util(r.record, state_.hosts);
    state_ = std::move(r.state);
    history_.push_back(r.record.raw_features);
    while (history_.size() > cfg_.window) history_.pop_front();
    return std::move(r.record);
  }

  // The k most recent intervals, zero-padded at the front before k have run.
  MetricsWindow current_window() const {
    std::vector<std::vector<FeatureRow>> raw;
    for (std::size_t i = history_.size(); i < cfg_.window; ++i) raw.emplace_back(hosts(), FeatureRow{});
    raw.insert(raw.end(), history_.begin(), history_.end());
    return normalize_window(raw, bounds_);
  }

 private:
  EnvironmentConfig cfg_;
  std::shared_ptr<const FaultPlan> plan_;
  ClusterState state_;
  std::vector<FeatureRow> bounds_;
  std::vector<double> util_;
  std::deque<std::vector<FeatureRow>> history_;
};

struct CollectedInterval {
  FpeSample sample;
  Schedule schedule;
  IntervalRecord record;
};

// Runs the baseline without preemption and records {window, schedule, labels}.
inline std::vector<CollectedInterval> collect_fpe_dataset(const EnvironmentConfig& cfg, std::size_t intervals) {
  Environment env(cfg, static_cast<std::int64_t>(intervals));
  std::vector<CollectedInterval> out;
  out.reserve(intervals);
  for (std::size_t t = 0; t < intervals; ++t) {
    auto p = env.prepare();
    auto rec = env.execute(p, p.baseline);
    CollectedInterval c;
    c.sample.window = std::move(p.window);
    c.sample.graph = std::move(p.graph);
    c.sample.labels = rec.labels;
    c.schedule = std::move(p.baseline);
    c.record = std::move(rec);
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<FpeSample> samples_of(const std::vector<CollectedInterval>& data) {
  std::vector<FpeSample> s;
  s.reserve(data.size());
  for (const auto& c : data) s.push_back(c.sample);
  return s;
}

}  // namespace pregan
