#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pregan/sim.hpp"

namespace pregan {
namespace {

Task make_task(std::int64_t id, double demand, double max_rate, double deadline = 1e9) {
  Task t;
  t.id = id;
  t.total_demand = demand;
  t.max_rate = max_rate;
  t.ram_footprint = 100.0;
  t.io_intensity = 0.0;
  t.deadline = deadline;
  return t;
}

Schedule place(const ClusterState& s, const std::vector<Task>& arrivals, const std::vector<int>& hosts) {
  std::vector<std::int64_t> ids;
  std::vector<int> prev;
  for (const auto& p : s.active) {
    ids.push_back(p.task.id);
    prev.push_back(p.host);
  }
  for (const auto& a : arrivals) {
    ids.push_back(a.id);
    prev.push_back(-1);
  }
  return Schedule::from_placements(s.host_count(), ids, prev, hosts);
}

Schedule keep(const ClusterState& s) {
  std::vector<int> hosts;
  for (const auto& p : s.active) hosts.push_back(p.host);
  return place(s, {}, hosts);
}

std::shared_ptr<const FaultPlan> no_faults() { return std::make_shared<FaultPlan>(); }

TEST(WorkloadTest, ZeroLambdaIsEmpty) {
  std::mt19937_64 rng(1);
  std::int64_t next = 0;
  EXPECT_TRUE(generate_workloads(rng, 0.0, 0, next).empty());
}

TEST(WorkloadTest, NegativeLambdaThrows) {
  std::mt19937_64 rng(1);
  std::int64_t next = 0;
  EXPECT_THROW(generate_workloads(rng, -0.5, 0, next), ParameterError);
}

TEST(WorkloadTest, PoissonMeanMatchesLambda) {
  std::mt19937_64 rng(2024);
  std::int64_t next = 0;
  double total = 0.0;
  for (int i = 0; i < 1000; ++i) total += static_cast<double>(generate_workloads(rng, 15.0, i, next).size());
  const double mean = total / 1000.0;
  EXPECT_GE(mean, 14.0);
  EXPECT_LE(mean, 16.0);
}

TEST(WorkloadTest, SameSeedSameTasks) {
  auto draw = [] {
    std::mt19937_64 rng(77);
    std::int64_t next = 0;
    return generate_workloads(rng, 8.0, 3, next);
  };
  const auto a = draw();
  const auto b = draw();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].app_class, b[i].app_class);
    EXPECT_EQ(a[i].total_demand, b[i].total_demand);
    EXPECT_EQ(a[i].deadline, b[i].deadline);
  }
}

TEST(WorkloadTest, ClassesCoverAllAndIdsUnique) {
  std::mt19937_64 rng(5);
  std::int64_t next = 0;
  std::array<int, kAppClasses> seen{};
  std::int64_t expected_id = 0;
  for (int i = 0; i < 50; ++i) {
    for (const auto& t : generate_workloads(rng, 6.0, i, next)) {
      ++seen[static_cast<std::size_t>(t.app_class)];
      EXPECT_EQ(t.id, expected_id++);
      EXPECT_GT(t.deadline, 0.0);
      EXPECT_GE(t.io_intensity, 0.0);
      EXPECT_LE(t.io_intensity, 1.0);
    }
  }
  for (int c : seen) EXPECT_GT(c, 50);
}

TEST(HostSpecTest, RejectsBadEnvelope) {
  HostSpec h;
  h.power_idle = 8.0;
  EXPECT_THROW(ClusterState::create({h}, 1), ParameterError);
  HostSpec z;
  z.net_bandwidth = 0.0;
  EXPECT_THROW(ClusterState::create({z}, 1), ParameterError);
}

TEST(StepTest, FullCapacityTaskCompletesInOneInterval) {
  auto s = ClusterState::create({HostSpec{}}, 1);
  const double cap_rate = s.hosts[0].cpu_capacity / 300.0;
  std::vector<Task> arr = {make_task(0, s.hosts[0].cpu_capacity, cap_rate)};
  const auto r = step_interval(s, place(s, arr, {0}), arr, FaultPlan{});
  ASSERT_EQ(r.record.completed.size(), 1u);
  EXPECT_NEAR(r.record.completed[0].response_time, 300.0, 1e-9);
  EXPECT_TRUE(r.state.active.empty());
}

TEST(StepTest, EmptyClusterBurnsIdleEnergy) {
  const auto hosts = default_hosts(4);
  auto s = ClusterState::create(hosts, 1);
  const auto r = step_interval(s, place(s, {}, {}), {}, FaultPlan{});
  double idle = 0.0;
  for (const auto& h : hosts) idle += h.power_idle * 300.0 / 3600.0;
  EXPECT_NEAR(r.record.energy_wh, idle, 1e-12);
  EXPECT_EQ(r.record.labels, std::vector<int>(4, 0));
}

TEST(StepTest, HalvedCapacityTakesTwoIntervals) {
  auto s = ClusterState::create({HostSpec{}}, 1);
  const double cap_rate = s.hosts[0].cpu_capacity / 300.0;
  FaultPlan plan;
  plan.ramp_intervals = 0;
  plan.events.push_back({0, 0, 10, FaultClass::kCpu, 0.5});
  std::vector<Task> arr = {make_task(0, s.hosts[0].cpu_capacity, cap_rate)};
  auto r1 = step_interval(s, place(s, arr, {0}), arr, plan);
  EXPECT_TRUE(r1.record.completed.empty());
  EXPECT_NEAR(r1.state.active[0].task.progress, 600.0, 1e-9);
  auto r2 = step_interval(r1.state, keep(r1.state), {}, plan);
  ASSERT_EQ(r2.record.completed.size(), 1u);
  EXPECT_NEAR(r2.record.completed[0].response_time, 600.0, 1e-9);
}

TEST(StepTest, RampedFaultStillFinishesInSecondInterval) {
  auto s = ClusterState::create({HostSpec{}}, 1);
  const double cap_rate = s.hosts[0].cpu_capacity / 300.0;
  FaultPlan plan;
  plan.events.push_back({0, 0, 10, FaultClass::kCpu, 0.5});
  std::vector<Task> arr = {make_task(0, s.hosts[0].cpu_capacity, cap_rate)};
  auto r1 = step_interval(s, place(s, arr, {0}), arr, plan);
  EXPECT_NEAR(r1.state.active[0].task.progress, 900.0, 1e-9);
  auto r2 = step_interval(r1.state, keep(r1.state), {}, plan);
  ASSERT_EQ(r2.record.completed.size(), 1u);
  EXPECT_NEAR(r2.record.completed[0].response_time, 300.0 + 300.0 * 300.0 / 600.0, 1e-9);
}

// Two tasks asking for more than the host offers get capacity in proportion
// to their rate caps.
TEST(StepTest, ProportionalSharingMatchesHandComputation) {
  auto s = ClusterState::create({HostSpec{}}, 1);
  std::vector<Task> arr = {make_task(0, 1e6, 3.0), make_task(1, 1e6, 1.0)};
  const auto r = step_interval(s, place(s, arr, {0, 0}), arr, FaultPlan{});
  // capacity 4/s, requests 3 and 1: fits exactly.
  EXPECT_NEAR(r.state.active[0].task.progress, 900.0, 1e-9);
  EXPECT_NEAR(r.state.active[1].task.progress, 300.0, 1e-9);

  std::vector<Task> big = {make_task(0, 1e6, 3.0), make_task(1, 1e6, 5.0)};
  const auto r2 = step_interval(s, place(s, big, {0, 0}), big, FaultPlan{});
  EXPECT_NEAR(r2.state.active[0].task.progress, 1200.0 * 3.0 / 8.0, 1e-9);
  EXPECT_NEAR(r2.state.active[1].task.progress, 1200.0 * 5.0 / 8.0, 1e-9);
}

TEST(StepTest, MigrationDowntimeBlocksProgress) {
  auto s = ClusterState::create(default_hosts(2), 1);
  std::vector<Task> arr = {make_task(0, 1e6, 1.0)};
  arr[0].ram_footprint = 500.0;
  auto r1 = step_interval(s, place(s, arr, {0}), arr, FaultPlan{});
  const double before = r1.state.active[0].task.progress;
  auto r2 = step_interval(r1.state, place(r1.state, {}, {1}), {}, FaultPlan{});
  EXPECT_EQ(r2.record.migration_count, 1u);
  EXPECT_NEAR(r2.record.migration_time_s, 500.0 / 100.0, 1e-12);
  EXPECT_NEAR(r2.state.active[0].task.progress - before, 1.0 * (300.0 - 5.0), 1e-9);
  EXPECT_EQ(r2.state.active[0].host, 1);
}

TEST(StepTest, InvalidSchedulesThrow) {
  auto s = ClusterState::create(default_hosts(2), 1);
  std::vector<Task> arr = {make_task(0, 100.0, 1.0)};
  EXPECT_THROW(place(s, arr, {2}), ScheduleError);
  Schedule wrong = place(s, arr, {0});
  wrong.hosts = 3;
  wrong.matrix.assign(3, 0.0);
  wrong.matrix[0] = 1.0;
  EXPECT_THROW(step_interval(s, wrong, arr, FaultPlan{}), ScheduleError);
  Schedule soft = place(s, arr, {0});
  soft.matrix = {0.6, 0.4};
  EXPECT_THROW(step_interval(s, soft, arr, FaultPlan{}), ScheduleError);
  EXPECT_THROW(step_interval(s, place(s, {}, {}), arr, FaultPlan{}), ScheduleError);
}

TEST(StepTest, RamOvercommitRunsSlower) {
  auto s = ClusterState::create({HostSpec{}}, 1);
  std::vector<Task> arr = {make_task(0, 1e6, 1.0), make_task(1, 1e6, 1.0)};
  arr[0].ram_footprint = 4096.0;
  arr[1].ram_footprint = 4096.0;
  const auto r = step_interval(s, place(s, arr, {0, 0}), arr, FaultPlan{});
  EXPECT_NEAR(r.state.active[0].task.progress, 300.0 * 0.5, 1e-9);
  EXPECT_EQ(r.record.labels[0], static_cast<int>(FaultClass::kRam));
}

// Full-capacity load for 45 s stays below the sustain rule; 60 s trips it.
TEST(LabelTest, SustainRuleNeedsSixtySeconds) {
  auto run = [](double seconds) {
    auto s = ClusterState::create({HostSpec{}}, 1);
    const double cap_rate = s.hosts[0].cpu_capacity / 300.0;
    std::vector<Task> arr = {make_task(0, cap_rate * seconds, cap_rate)};
    return step_interval(s, place(s, arr, {0}), arr, FaultPlan{}).record.labels[0];
  };
  EXPECT_EQ(run(45.0), 0);
  EXPECT_EQ(run(60.0), static_cast<int>(FaultClass::kCpu));
}

TEST(LabelTest, EachFaultClassProducesItsLabel) {
  for (FaultClass f : {FaultClass::kCpu, FaultClass::kRam, FaultClass::kNetwork}) {
    auto s = ClusterState::create(default_hosts(2), 1);
    FaultPlan plan;
    plan.ramp_intervals = 0;
    plan.events.push_back({1, 0, 5, f, 0.95});
    const auto r = step_interval(s, place(s, {}, {}), {}, plan);
    EXPECT_EQ(r.record.labels[0], 0);
    EXPECT_EQ(r.record.labels[1], static_cast<int>(f)) << fault_class_name(f);
  }
}

TEST(LabelTest, CpuOutranksNetwork) {
  auto s = ClusterState::create({HostSpec{}}, 1);
  FaultPlan plan;
  plan.ramp_intervals = 0;
  plan.events.push_back({0, 0, 5, FaultClass::kNetwork, 0.95});
  plan.events.push_back({0, 0, 5, FaultClass::kCpu, 0.95});
  const auto r = step_interval(s, place(s, {}, {}), {}, plan);
  EXPECT_EQ(r.record.labels[0], static_cast<int>(FaultClass::kCpu));
}

TEST(LabelTest, LeakResetsAfterFaultEnds) {
  auto s = ClusterState::create({HostSpec{}}, 1);
  FaultPlan plan;
  plan.ramp_intervals = 0;
  plan.events.push_back({0, 0, 1, FaultClass::kRam, 1.0});
  auto r1 = step_interval(s, place(s, {}, {}), {}, plan);
  EXPECT_NEAR(r1.state.leaked_ram[0], 100.0, 1e-9);
  auto r2 = step_interval(r1.state, place(r1.state, {}, {}), {}, plan);
  EXPECT_EQ(r2.state.leaked_ram[0], 0.0);
  EXPECT_EQ(r2.record.labels[0], 0);
}

struct Run {
  std::vector<IntervalRecord> records;
  ClusterState final_state;
};

Run simulate(std::uint64_t seed, std::size_t m, int intervals, double fault_rate = 0.05) {
  SimConfig cfg;
  FaultModel fm;
  fm.rate = fault_rate;
  const FaultPlan plan = generate_fault_plan(seed ^ 0x5eedULL, m, intervals, fm);
  auto s = ClusterState::create(default_hosts(m), seed);
  Run out;
  std::vector<double> util(m, 0.0);
  for (int i = 0; i < intervals; ++i) {
    auto arr = generate_workloads(s.rng, cfg.workload.lambda, s.interval_index, s.next_task_id);
    const auto sched = least_loaded_schedule(s, arr, util, cfg);
    auto r = step_interval(s, sched, arr, plan, cfg);
    util = measured_cpu_util(r.record, s.hosts);
    out.records.push_back(r.record);
    s = std::move(r.state);
  }
  out.final_state = s;
  return out;
}

TEST(PropertyTest, DeterministicAcrossRuns) {
  const auto a = simulate(11, 6, 40);
  const auto b = simulate(11, 6, 40);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_TRUE(a.records[i] == b.records[i]) << i;
}

TEST(PropertyTest, EnergyWithinPowerEnvelope) {
  const auto run = simulate(12, 6, 40);
  const auto hosts = default_hosts(6);
  for (const auto& r : run.records) {
    ASSERT_GE(r.energy_wh, 0.0);
    for (std::size_t h = 0; h < hosts.size(); ++h) {
      const double e = r.raw_features[h][kPower] * 300.0 / 3600.0;
      EXPECT_GE(e, hosts[h].power_idle * 300.0 / 3600.0 - 1e-12);
      EXPECT_LE(e, hosts[h].power_max * 300.0 / 3600.0 + 1e-12);
    }
  }
}

TEST(PropertyTest, ProgressBoundedByEffectiveCapacity) {
  SimConfig cfg;
  const std::size_t m = 4;
  FaultModel fm;
  fm.rate = 0.1;
  const FaultPlan plan = generate_fault_plan(3, m, 30, fm);
  auto s = ClusterState::create(default_hosts(m), 3);
  std::vector<double> util(m, 0.0);
  for (int i = 0; i < 30; ++i) {
    auto arr = generate_workloads(s.rng, 10.0, s.interval_index, s.next_task_id);
    const auto sched = least_loaded_schedule(s, arr, util, cfg);
    auto r = step_interval(s, sched, arr, plan, cfg);
    double before = 0.0, after = 0.0;
    for (const auto& p : s.active) before += p.task.progress;
    for (const auto& a : arr) before += a.progress;
    for (const auto& p : r.state.active) after += p.task.progress;
    for (const auto& c : r.record.completed) {
      for (const auto& p : s.active)
        if (p.task.id == c.id) after += p.task.total_demand;
      for (const auto& a : arr)
        if (a.id == c.id) after += a.total_demand;
    }
    const auto fx = fault_effects(plan, m, s.interval_index);
    double cap = 0.0;
    for (std::size_t h = 0; h < m; ++h) cap += s.hosts[h].cpu_capacity * (1.0 - fx[h].cpu_severity);
    EXPECT_LE(after - before, cap + 1e-6) << "interval " << i;
    for (const auto& p : r.state.active) {
      EXPECT_GE(p.task.progress, 0.0);
      EXPECT_LE(p.task.progress, p.task.total_demand);
    }
    util = measured_cpu_util(r.record, s.hosts);
    s = std::move(r.state);
  }
}

TEST(PropertyTest, LabelsOnlyUnderSustainedConditions) {
  // A host with no tasks, no faults can never be labelled.
  const auto run = simulate(13, 6, 60, 0.0);
  for (const auto& r : run.records)
    for (int l : r.labels) EXPECT_GE(l, 0);
  auto s = ClusterState::create(default_hosts(3), 1);
  const auto r = step_interval(s, place(s, {}, {}), {}, FaultPlan{});
  EXPECT_EQ(r.record.labels, std::vector<int>(3, 0));
}

TEST(FaultPlanTest, EventsAreValidAndNonOverlapping) {
  FaultModel fm;
  fm.rate = 0.1;
  const FaultPlan plan = generate_fault_plan(9, 8, 200, fm);
  EXPECT_NO_THROW(plan.validate(8));
  EXPECT_FALSE(plan.events.empty());
  std::vector<std::int64_t> busy_until(8, 0);
  std::vector<FaultEvent> by_host = plan.events;
  std::stable_sort(by_host.begin(), by_host.end(),
                   [](const auto& a, const auto& b) { return a.start_interval < b.start_interval; });
  for (const auto& e : by_host) {
    EXPECT_GE(e.start_interval, busy_until[e.host]);
    EXPECT_GE(e.duration, fm.min_duration);
    EXPECT_LE(e.duration, fm.max_duration);
    busy_until[e.host] = e.start_interval + e.duration;
  }
  FaultPlan bad;
  bad.events.push_back({8, 0, 1, FaultClass::kCpu, 0.5});
  EXPECT_THROW(bad.validate(8), ParameterError);
}

TEST(SnapshotTest, ReplayIsBitIdentical) {
  auto run = simulate(21, 4, 10);
  const ClusterState& s = run.final_state;
  auto plan = std::make_shared<FaultPlan>(generate_fault_plan(21 ^ 0x5eedULL, 4, 10, FaultModel{}));
  ClusterState copy = s;
  auto arr = generate_workloads(copy.rng, 6.0, copy.interval_index, copy.next_task_id);
  const Snapshot snap = snapshot(s, arr, plan, SimConfig{});
  const auto sched = least_loaded_schedule(s, arr, {}, SimConfig{});
  const auto a = step_interval(snap.state(), sched, snap.arrivals(), snap.plan(), snap.config());
  const auto b = step_interval(s, sched, arr, *plan, SimConfig{});
  EXPECT_TRUE(a.record == b.record);
}

TEST(SnapshotTest, MutatingOriginalLeavesSnapshotIntact) {
  auto s = ClusterState::create(default_hosts(2), 4);
  std::vector<Task> arr = {make_task(0, 5000.0, 1.0)};
  s = step_interval(s, place(s, arr, {0}), arr, FaultPlan{}).state;
  const Snapshot snap = snapshot(s, {}, no_faults(), SimConfig{});
  const auto rng_before = snap.state().rng;
  s.active[0].task.progress = 4999.0;
  s.active[0].host = 1;
  s.rng.discard(10);
  EXPECT_EQ(snap.state().active[0].host, 0);
  EXPECT_NEAR(snap.state().active[0].task.progress, 300.0, 1e-9);
  EXPECT_TRUE(snap.state().rng == rng_before);
}

TEST(SnapshotTest, EmptyClusterReplayIsIdle) {
  const auto hosts = default_hosts(3);
  const auto s = ClusterState::create(hosts, 1);
  const Snapshot snap = snapshot(s, {}, no_faults(), SimConfig{});
  const auto r = step_interval(snap.state(), place(s, {}, {}), {}, snap.plan(), snap.config());
  double idle = 0.0;
  for (const auto& h : hosts) idle += h.power_idle * 300.0 / 3600.0;
  EXPECT_NEAR(r.record.energy_wh, idle, 1e-12);
}

TEST(CosimTest, SameScheduleSameScore) {
  auto run = simulate(31, 4, 8);
  auto arr = generate_workloads(run.final_state.rng, 6.0, run.final_state.interval_index,
                                run.final_state.next_task_id);
  const Snapshot snap = snapshot(run.final_state, arr, no_faults(), SimConfig{});
  const auto sched = least_loaded_schedule(run.final_state, arr, {}, SimConfig{});
  EXPECT_EQ(cosimulate(snap, sched), cosimulate(snap, sched));
  EXPECT_EQ(cosimulate(snap, sched, 3), cosimulate(snap, sched, 3));
}

TEST(CosimTest, IdleScoreIsWeightedIdleEnergy) {
  const auto hosts = default_hosts(4);
  const auto s = ClusterState::create(hosts, 1);
  const Snapshot snap = snapshot(s, {}, no_faults(), SimConfig{});
  double idle = 0.0, envelope = 0.0;
  for (const auto& h : hosts) {
    idle += h.power_idle;
    envelope += h.power_max;
  }
  EXPECT_NEAR(cosimulate(snap, place(s, {}, {})), -0.5 * idle / envelope, 1e-12);
}

TEST(CosimTest, ScoreEqualsScoreOfSteppedRecord) {
  auto run = simulate(41, 5, 12);
  auto plan = std::make_shared<FaultPlan>(generate_fault_plan(41 ^ 0x5eedULL, 5, 40, FaultModel{}));
  ClusterState s = run.final_state;
  auto arr = generate_workloads(s.rng, 6.0, s.interval_index, s.next_task_id);
  const Snapshot snap = snapshot(s, arr, plan, SimConfig{});
  const auto sched = least_loaded_schedule(s, arr, {}, SimConfig{});
  const auto step = step_interval(s, sched, arr, *plan, SimConfig{});
  EXPECT_EQ(cosimulate(snap, sched, 1), qos_score({step.record}, s.hosts, SimConfig{}));
}

// Brute-force replay of both branches: a task close to its deadline on a host
// whose CPU is hogged is better off moved.
TEST(CosimTest, MovingOffFaultedHostScoresHigher) {
  auto s = ClusterState::create(default_hosts(2), 1);
  std::vector<Task> arr = {make_task(0, 600.0, 1.0, 900.0)};
  s = step_interval(s, place(s, arr, {0}), arr, FaultPlan{}).state;
  auto plan = std::make_shared<FaultPlan>();
  plan->ramp_intervals = 0;
  plan->events.push_back({0, 1, 5, FaultClass::kCpu, 0.95});
  const Snapshot snap = snapshot(s, {}, plan, SimConfig{});
  const double stay = cosimulate(snap, place(s, {}, {0}));
  const double move = cosimulate(snap, place(s, {}, {1}));
  EXPECT_GT(move, stay);
}

TEST(CosimTest, ZeroHorizonThrows) {
  const auto s = ClusterState::create(default_hosts(2), 1);
  const Snapshot snap = snapshot(s, {}, no_faults(), SimConfig{});
  EXPECT_THROW(cosimulate(snap, place(s, {}, {}), 0), ParameterError);
}

TEST(NormalizeTest, ZerosStayZero) {
  const auto hosts = default_hosts(2);
  std::vector<FeatureRow> bounds;
  for (const auto& h : hosts) bounds.push_back(feature_bounds(h, SimConfig{}));
  const std::vector<std::vector<FeatureRow>> raw(3, std::vector<FeatureRow>(2, FeatureRow{}));
  const auto w = normalize_window(raw, bounds);
  EXPECT_EQ(w.k, 3u);
  for (float v : w.data) EXPECT_EQ(v, 0.0f);
}

TEST(NormalizeTest, CapacityMapsToOneAndOverflowClamps) {
  const HostSpec h;
  const auto bounds = std::vector<FeatureRow>{feature_bounds(h, SimConfig{})};
  FeatureRow row{};
  row[kCpuUtil] = h.cpu_capacity;
  row[kNetRx] = 2.0 * h.net_bandwidth;
  row[kRamUtil] = 0.25 * h.ram_capacity;
  const auto w = normalize_window({{row}}, bounds);
  EXPECT_EQ(w.at(0, 0, kCpuUtil), 1.0f);
  EXPECT_EQ(w.at(0, 0, kNetRx), 1.0f);
  EXPECT_FLOAT_EQ(w.at(0, 0, kRamUtil), 0.25f);
}

TEST(NormalizeTest, NanAndNegativeRejected) {
  const auto bounds = std::vector<FeatureRow>{feature_bounds(HostSpec{}, SimConfig{})};
  FeatureRow row{};
  row[kDiskRead] = std::nan("");
  EXPECT_THROW(normalize_window({{row}}, bounds), DataError);
  row[kDiskRead] = -1.0;
  EXPECT_THROW(normalize_window({{row}}, bounds), DataError);
}

TEST(NormalizeTest, SimulatedWindowsStayInUnitRange) {
  const auto run = simulate(51, 4, 30, 0.1);
  std::vector<FeatureRow> bounds;
  for (const auto& h : default_hosts(4)) bounds.push_back(feature_bounds(h, SimConfig{}));
  std::vector<std::vector<FeatureRow>> raw;
  for (const auto& r : run.records) raw.push_back(r.raw_features);
  const auto w = normalize_window(raw, bounds);
  for (float v : w.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(BaselineTest, ArrivalsGoToLeastLoadedHost) {
  auto s = ClusterState::create(default_hosts(3), 1);
  std::vector<Task> arr = {make_task(0, 1e5, 2.0), make_task(1, 1e5, 2.0), make_task(2, 1e5, 2.0)};
  const auto sched = least_loaded_schedule(s, arr, {0.5, 0.0, 0.2}, SimConfig{});
  // each arrival adds 2*300/1200 = 0.5 to its host
  EXPECT_EQ(sched.placements(), (std::vector<int>{1, 2, 0}));
  const auto tie = least_loaded_schedule(s, {make_task(3, 1.0, 1.0)}, {0.0, 0.0, 0.0}, SimConfig{});
  EXPECT_EQ(tie.placements(), std::vector<int>{0});
}

}  // namespace
}  // namespace pregan
