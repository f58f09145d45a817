#pragma once

// Closed-loop GAN training and evaluation runs.

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "pregan/environment.hpp"
#include "pregan/fpe.hpp"
#include "pregan/gan.hpp"
#include "pregan/metrics.hpp"

namespace pregan {

struct GanTrainConfig {
  AdamWConfig generator_optimizer;
  AdamWConfig discriminator_optimizer;
  // false: score and execute without touching the weights (held-out runs).
  bool learn = true;
  std::size_t horizon = 1;  // co-simulation intervals per verdict
  // Past proposals kept for extra discriminator updates (0 disables).
  std::size_t replay_capacity = 512;
  std::size_t replay_updates = 16;
  // Std of Gaussian noise on the generator field while learning, so the
  // discriminator sees amended schedules that differ from S.
  double exploration = 1.5;
  std::uint64_t seed = 0;
};

struct GanStep {
  DecisionRecord decision;
  double sim_baseline = 0.0;
  double sim_amended = 0.0;
  bool amended_better = false;
  std::size_t proposed_migrations = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
};

struct GanTrainReport {
  std::vector<GanStep> steps;  // one per interval with a predicted fault
  std::vector<IntervalRecord> records;
};

// One decision with the encoder carry kept across intervals.
template <class Real>
class PreganAgent {
 public:
  PreganAgent(const FpeModel<Real>& fpe, const GanModel<Real>& gan) : fpe_(&fpe), gan_(&gan) {}

  Decision<Real> decide(const PendingInterval& p, const ClusterState& state, const SimConfig& sim, std::int64_t t) {
    ensure_carry(p.window.m);
    const auto tasks = task_context<Real>(state, p.arrivals, sim);
    auto d = infer(*fpe_, *gan_, p.window, p.graph, p.baseline, state.hosts, tasks, *carry_, t);
    carry_ = next_carry(d.fpe);
    return d;
  }

  void ensure_carry(std::size_t m) {
    if (!carry_ || carry_->rows() != m) carry_ = zero_carry(*fpe_, m);
  }
  std::optional<Tensor<Real>>& carry() { return carry_; }

 private:
  const FpeModel<Real>* fpe_;
  const GanModel<Real>* gan_;
  std::optional<Tensor<Real>> carry_;
};

// On-policy training: every interval with a predicted fault scores S and the
// decoded N by co-simulation, updates the discriminator on that verdict,
// then the generator against the updated discriminator. The executed
// schedule is whichever the discriminator preferred before the update.
template <class Real>
GanTrainReport train_gan(const FpeModel<Real>& fpe, GanModel<Real>& gan, Environment& env, std::size_t intervals,
                         const GanTrainConfig& tc) {
  GanTrainReport report;
  std::optional<Tensor<Real>> carry;
  const std::size_t m = env.hosts();
  std::mt19937_64 rng(tc.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  struct Replayed {
    GanInput<Real> input;
    Tensor<Real> delta;
    bool label;
  };
  std::vector<Replayed> replay;
  std::size_t replay_next = 0;
  for (std::size_t t = 0; t < intervals; ++t) {
    auto p = env.prepare();
    if (!carry || carry->rows() != p.window.m) carry = zero_carry(fpe, p.window.m);
    const auto f = fpe_forward(fpe, flatten_window<Real>(p.window), p.graph, *carry);
    carry = next_carry(f);
    const auto detected = detections(f.scores);
    const bool predicted = std::any_of(detected.begin(), detected.end(), [](bool b) { return b; });
    Schedule executed = p.baseline;
    if (predicted && p.baseline.tasks() > 0) {
      const Tensor<Real> ef = build_fault_embedding(f.scores, f.embeddings).detach();
      const auto in = gan_input(p.baseline, ef, detected, p.window, env.state().hosts,
                                task_context<Real>(env.state(), p.arrivals, env.sim()),
                                gan.cfg.max_containers);
      GanStep step;
      std::optional<Tensor<Real>> noise;
      if (tc.learn && tc.exploration > 0.0) {
        // Only tasks on hosts predicted faulty explore.
        const auto inc = p.baseline.placements();
        std::vector<Real> z(p.baseline.tasks() * m, Real(0));
        for (std::size_t r = 0; r < inc.size(); ++r) {
          if (!detected[static_cast<std::size_t>(inc[r])]) continue;
          for (std::size_t j = 0; j < m; ++j) z[r * m + j] = static_cast<Real>(tc.exploration * gauss(rng));
        }
        noise = Tensor<Real>({p.baseline.tasks(), m}, std::move(z));
      }
      const auto gen = generate_delta(gan, in, noise ? &*noise : nullptr);
      const Schedule amended = compose_schedule(p.baseline, gen.delta);
      step.proposed_migrations = migration_count(p.baseline, amended);
      const Snapshot snap = env.snapshot_for(p);
      step.sim_baseline = cosimulate(snap, p.baseline, tc.horizon);
      step.sim_amended = step.proposed_migrations == 0 ? step.sim_baseline : cosimulate(snap, amended, tc.horizon);
      step.amended_better = step.sim_amended >= step.sim_baseline;

      const auto disc = discriminate(gan, in, gen.delta.detach());
      step.decision.interval = static_cast<std::int64_t>(t);
      step.decision.fault_predicted = true;
      step.decision.d0 = disc.scores.at(0, 0);
      step.decision.d1 = disc.scores.at(0, 1);
      step.decision.accepted = prefer_new(step.decision.d0, step.decision.d1);
      step.loss_d = discriminator_loss(disc, step.amended_better, m).item();
      if (tc.learn) {
        // A tie (N decodes to S) always carries the label 1 and says nothing
        // about migrations, so only real proposals train the discriminator.
        if (step.proposed_migrations > 0) {
          discriminator_update(gan, in, gen.delta, step.amended_better, tc.discriminator_optimizer);
          if (tc.replay_capacity > 0) {
            Replayed item{in, gen.delta.detach(), step.amended_better};
            if (replay.size() < tc.replay_capacity) {
              replay.push_back(std::move(item));
            } else {
              replay[replay_next] = std::move(item);
              replay_next = (replay_next + 1) % tc.replay_capacity;
            }
          }
          for (std::size_t u = 0; u < tc.replay_updates && !replay.empty(); ++u) {
            const auto& r = replay[std::uniform_int_distribution<std::size_t>(0, replay.size() - 1)(rng)];
            discriminator_update(gan, r.input, r.delta, r.label, tc.discriminator_optimizer);
          }
        }
        step.loss_g = generator_update(gan, in, gen.delta, tc.generator_optimizer);
      }

      executed = step.decision.accepted ? amended : p.baseline;
      step.decision.migrations = migration_count(p.baseline, executed);
      report.steps.push_back(step);
    }
    report.records.push_back(env.execute(p, executed));
  }
  return report;
}

struct LoopResult {
  std::vector<IntervalRecord> records;
  std::vector<DecisionRecord> decisions;  // empty for the baseline
  std::vector<std::vector<int>> predicted_classes;
  std::vector<std::vector<bool>> detected;
  std::vector<std::vector<double>> fault_scores;  // D^A_i[1] per host
  // Wall-clock seconds, kept apart from the deterministic outputs.
  double scheduler_seconds = 0.0;
  double pregan_seconds = 0.0;
};

template <class Real>
struct LoopOptions {
  std::optional<Tensor<Real>> carry;  // used when its row count matches the cluster
  std::function<void(std::int64_t, const Decision<Real>&)> observe;
};

// Runs `intervals` decisions. Without models, the least-loaded schedule is
// executed unchanged.
template <class Real>
LoopResult run_closed_loop(Environment& env, std::size_t intervals, const FpeModel<Real>* fpe,
                           const PrototypeSet* protos, const GanModel<Real>* gan,
                           const LoopOptions<Real>& options = {}) {
  using clock = std::chrono::steady_clock;
  LoopResult out;
  std::optional<PreganAgent<Real>> agent;
  if (fpe != nullptr && gan != nullptr) {
    agent.emplace(*fpe, *gan);
    if (options.carry && options.carry->rows() == env.hosts()) agent->carry() = options.carry;
  }
  for (std::size_t t = 0; t < intervals; ++t) {
    const auto t0 = clock::now();
    auto p = env.prepare();
    const auto t1 = clock::now();
    out.scheduler_seconds += std::chrono::duration<double>(t1 - t0).count();
    if (!agent) {
      out.records.push_back(env.execute(p, p.baseline));
      continue;
    }
    auto d = agent->decide(p, env.state(), env.sim(), static_cast<std::int64_t>(t));
    out.pregan_seconds += std::chrono::duration<double>(clock::now() - t1).count();
    if (options.observe) options.observe(static_cast<std::int64_t>(t), d);
    std::vector<bool> det = detections(d.fpe.scores);
    std::vector<double> s1(det.size());
    for (std::size_t i = 0; i < det.size(); ++i) s1[i] = d.fpe.scores.at(i, 1);
    out.fault_scores.push_back(std::move(s1));
    std::vector<int> cls(det.size(), 0);
    if (protos != nullptr && !protos->vectors.empty()) {
      for (std::size_t i = 0; i < det.size(); ++i) cls[i] = classify(row_values(d.fpe.embeddings, i), *protos);
    }
    out.detected.push_back(std::move(det));
    out.predicted_classes.push_back(std::move(cls));
    out.decisions.push_back(d.record);
    out.records.push_back(env.execute(p, d.final_schedule));
  }
  return out;
}

}  // namespace pregan
