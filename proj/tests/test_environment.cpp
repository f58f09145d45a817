#include <gtest/gtest.h>

#include "pregan/environment.hpp"
#include "pregan/loop.hpp"

namespace pregan {
namespace {

EnvironmentConfig small_config(std::uint64_t seed) {
  EnvironmentConfig c;
  c.hosts = default_hosts(4);
  c.sim.workload.lambda = 1.5;
  c.seed = seed;
  return c;
}

TEST(MixSeedTest, DistinctAndStable) {
  EXPECT_EQ(mix_seed(0), mix_seed(0));
  EXPECT_NE(mix_seed(0), mix_seed(1));
  EXPECT_NE(mix_seed(1), 1u);
}

TEST(CollectTest, ExactRecordCount) {
  auto cfg = small_config(1);
  const auto data = collect_fpe_dataset(cfg, 1000);
  ASSERT_EQ(data.size(), 1000u);
  for (std::size_t t = 0; t < data.size(); ++t) {
    EXPECT_EQ(data[t].record.interval_index, static_cast<std::int64_t>(t + cfg.warmup));
    EXPECT_EQ(data[t].sample.labels, data[t].record.labels);
    EXPECT_EQ(data[t].sample.window.k, cfg.window);
    EXPECT_TRUE(data[t].schedule.is_one_hot());
  }
}

TEST(CollectTest, ZeroFaultRateGivesNoLabels) {
  auto cfg = small_config(2);
  cfg.hosts = default_hosts(16);
  cfg.sim.workload.lambda = 3.0;
  cfg.faults.rate = 0.0;
  const auto data = collect_fpe_dataset(cfg, 300);
  for (const auto& c : data)
    for (int l : c.sample.labels) EXPECT_EQ(l, 0);
}

// Labels are thresholds on effective utilisation, so a saturated host is
// labelled CPU even when nothing was injected.
TEST(CollectTest, SaturationWithoutFaultsIsLabelledCpu) {
  auto cfg = small_config(2);
  cfg.hosts = default_hosts(16);
  cfg.sim.workload.lambda = 10.0;
  cfg.faults.rate = 0.0;
  const auto data = collect_fpe_dataset(cfg, 100);
  std::size_t cpu = 0;
  for (const auto& c : data)
    for (int l : c.sample.labels) {
      EXPECT_TRUE(l == 0 || l == 1);
      cpu += l == 1;
    }
  EXPECT_GT(cpu, 0u);
}

TEST(CollectTest, SameSeedSameTrace) {
  const auto a = collect_fpe_dataset(small_config(3), 200);
  const auto b = collect_fpe_dataset(small_config(3), 200);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a[t].record, b[t].record);
    EXPECT_EQ(a[t].sample.window.data, b[t].sample.window.data);
    EXPECT_EQ(a[t].schedule.matrix, b[t].schedule.matrix);
  }
  const auto c = collect_fpe_dataset(small_config(4), 200);
  bool differs = false;
  for (std::size_t t = 0; t < a.size() && !differs; ++t) differs = !(a[t].record == c[t].record);
  EXPECT_TRUE(differs);
}

TEST(EnvironmentTest, WindowIsZeroPaddedBeforeHistory) {
  auto cfg = small_config(5);
  cfg.warmup = 2;
  Environment env(cfg, 10);
  const auto w = env.current_window();
  ASSERT_EQ(w.k, 5u);
  for (std::size_t step = 0; step < 3; ++step)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t f = 0; f < kFeatureCount; ++f) EXPECT_EQ(w.at(step, h, f), 0.0f);
  double last = 0.0;
  for (std::size_t h = 0; h < 4; ++h) last += w.at(4, h, kPower);
  EXPECT_GT(last, 0.0);
}

TEST(EnvironmentTest, SnapshotReplaysLiveInterval) {
  Environment env(small_config(6), 20);
  for (int t = 0; t < 10; ++t) {
    auto p = env.prepare();
    const auto snap = env.snapshot_for(p);
    const double predicted = cosimulate(snap, p.baseline);
    const auto rec = env.execute(p, p.baseline);
    EXPECT_EQ(predicted, qos_score({rec}, env.state().hosts, env.sim()));
  }
}

TEST(ClosedLoopTest, BaselineRunMatchesCollection) {
  auto cfg = small_config(7);
  Environment env(cfg, 50);
  const auto run = run_closed_loop<float>(env, 50, nullptr, nullptr, nullptr);
  const auto data = collect_fpe_dataset(cfg, 50);
  ASSERT_EQ(run.records.size(), 50u);
  EXPECT_TRUE(run.decisions.empty());
  for (std::size_t t = 0; t < 50; ++t) EXPECT_EQ(run.records[t], data[t].record);
}

TEST(ClosedLoopTest, PreganRunIsDeterministicAndExecutable) {
  auto cfg = small_config(8);
  cfg.faults.rate = 0.1;
  const auto fpe = FpeModel<float>::create(FpeConfig{}, 1);
  const auto gan = GanModel<float>::create(GanConfig{}, 2);
  Environment a(cfg, 40), b(cfg, 40);
  const auto ra = run_closed_loop<float>(a, 40, &fpe, nullptr, &gan);
  const auto rb = run_closed_loop<float>(b, 40, &fpe, nullptr, &gan);
  ASSERT_EQ(ra.decisions.size(), 40u);
  for (std::size_t t = 0; t < 40; ++t) {
    EXPECT_EQ(ra.records[t], rb.records[t]);
    EXPECT_EQ(ra.decisions[t].d1, rb.decisions[t].d1);
    EXPECT_EQ(ra.decisions[t].accepted, ra.decisions[t].d1 >= ra.decisions[t].d0);
  }
}

}  // namespace
}  // namespace pregan
