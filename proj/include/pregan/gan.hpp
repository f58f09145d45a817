#pragma once

// Preemptive-migration generator and discriminator.
//
// The generator walks the tasks in row order. Each task attends over
// per-host context (fault embedding, detection flag, occupancy, recent load,
// power slope, load placed so far) and the attention becomes an additive
// field over hosts; the schedule row plus field goes through a host-wise
// LayerNorm and tanh to give that task's delta row. The discriminator values a
// placement as a sum over hosts of a learned function of host context and
// the container count and CPU load placed there; its two logits are the
// values of S and of N, so D = [0.5, 0.5] whenever N places like S.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pregan/errors.hpp"
#include "pregan/fpe.hpp"
#include "pregan/metrics.hpp"
#include "pregan/nn.hpp"
#include "pregan/schedule.hpp"
#include "pregan/sim.hpp"
#include "pregan/tensor.hpp"

namespace pregan {

// Host context columns after the fault embedding.
inline constexpr std::size_t kHostExtras = 6;  // detected, occupancy, cpu, ram, net, power slope
inline constexpr std::size_t kTaskFeatures = 5;  // rate share, io intensity, is new, RAM, slack
inline constexpr double kPowerScale = 10.0;      // W
inline constexpr double kRamScale = 1000.0;      // MB

struct GanConfig {
  std::size_t embed = 8;
  std::size_t heads = 2;
  std::size_t key_width = 8;
  std::size_t disc_hidden = 32;
  double placement_sharpness = 1.0;  // softmax scale for soft placements
  double max_containers = 12.0;

  std::size_t host_width() const { return embed + kHostExtras; }
  void validate() const {
    if (embed == 0 || heads == 0 || key_width == 0 || disc_hidden == 0) {
      throw ParameterError("GAN sizes must be positive");
    }
  }
};

template <class Real = float>
struct GanModel {
  GanConfig cfg;
  ParameterStore<Real> generator;
  ParameterStore<Real> discriminator;
  std::vector<std::size_t> wq, wk, wv, bv;
  std::size_t ln_gamma = 0, ln_beta = 0;
  std::size_t d_w1 = 0, d_b1 = 0, d_w2 = 0;

  static GanModel create(const GanConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    GanModel g;
    g.cfg = cfg;
    std::mt19937_64 rng(seed);
    const std::size_t hw = cfg.host_width();
    auto& G = g.generator;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string p = "gen.head" + std::to_string(h);
      g.wq.push_back(G.add(p + ".w_q", glorot<Real>(hw + kTaskFeatures, cfg.key_width, rng)));
      g.wk.push_back(G.add(p + ".w_k", glorot<Real>(hw + 1, cfg.key_width, rng)));
      g.wv.push_back(G.add(p + ".w_v", glorot<Real>(hw + 1, 1, rng)));
      g.bv.push_back(G.add(p + ".b_v", Tensor<Real>::zeros({1, 1})));
    }
    g.ln_gamma = G.add("gen.ln.gamma", Tensor<Real>::full({1, 1}, Real(1)));
    g.ln_beta = G.add("gen.ln.beta", Tensor<Real>::zeros({1, 1}));
    auto& D = g.discriminator;
    const std::size_t din = hw + 2;
    g.d_w1 = D.add("disc.w1", glorot<Real>(din, cfg.disc_hidden, rng));
    g.d_b1 = D.add("disc.b1", Tensor<Real>::zeros({1, cfg.disc_hidden}));
    g.d_w2 = D.add("disc.w2", glorot<Real>(cfg.disc_hidden, 1, rng));
    return g;
  }

  const Tensor<Real>& gp(std::size_t i) const { return generator.tensor(i); }
  const Tensor<Real>& dp(std::size_t i) const { return discriminator.tensor(i); }
};

// Everything the generator and discriminator see for one interval.
template <class Real>
struct GanInput {
  Tensor<Real> schedule;   // S, p x m one-hot
  Tensor<Real> hosts;      // m x host_width
  Tensor<Real> tasks;      // p x kTaskFeatures
  Tensor<Real> base_load;  // m x 1: measured CPU share plus arrivals placed by S
  std::vector<int> incumbent;  // S placement per task
};

template <class Real>
Tensor<Real> schedule_tensor(const Schedule& s) {
  return Tensor<Real>({s.tasks(), s.hosts}, std::vector<Real>(s.matrix.begin(), s.matrix.end()));
}

// Host context: [E^F, detected, occupancy, cpu, ram, net, power slope] with
// the loads taken from the newest window step.
template <class Real>
Tensor<Real> host_context(const Tensor<Real>& fault_embedding, const std::vector<bool>& detected, const Schedule& s,
                          const MetricsWindow& w, const std::vector<HostSpec>& specs, double max_containers) {
  const std::size_t m = s.hosts;
  const std::size_t e = fault_embedding.cols();
  if (fault_embedding.rows() != m || detected.size() != m || w.m != m || specs.size() != m) {
    throw ShapeError("host_context: host counts differ");
  }
  const auto occ = s.occupancy();
  std::vector<Real> v;
  v.reserve(m * (e + kHostExtras));
  const std::size_t last = w.k - 1;
  for (std::size_t h = 0; h < m; ++h) {
    for (std::size_t j = 0; j < e; ++j) v.push_back(fault_embedding.at(h, j));
    v.push_back(detected[h] ? Real(1) : Real(0));
    v.push_back(static_cast<Real>(std::min(1.0, occ[h] / max_containers)));
    v.push_back(static_cast<Real>(w.at(last, h, kCpuUtil)));
    v.push_back(static_cast<Real>(w.at(last, h, kRamUtil)));
    v.push_back(static_cast<Real>(std::max(w.at(last, h, kNetTx), w.at(last, h, kNetRx))));
    v.push_back(static_cast<Real>((specs[h].power_max - specs[h].power_idle) / kPowerScale));
  }
  return Tensor<Real>({m, e + kHostExtras}, std::move(v));
}

// Per task: [rate cap as a share of the host, io intensity, is new, RAM,
// slack]. Slack is the time left before the deadline beyond what the
// remaining work needs at the rate cap, in intervals, squashed by tanh.
template <class Real>
Tensor<Real> task_context(const ClusterState& state, const std::vector<Task>& arrivals, const SimConfig& cfg) {
  std::vector<Real> v;
  auto push = [&](const Task& t, int host, bool fresh) {
    const auto& spec = state.hosts[static_cast<std::size_t>(std::max(host, 0))];
    v.push_back(static_cast<Real>(std::min(1.0, t.max_rate * cfg.interval_seconds / spec.cpu_capacity)));
    v.push_back(static_cast<Real>(t.io_intensity));
    v.push_back(fresh ? Real(1) : Real(0));
    v.push_back(static_cast<Real>(t.ram_footprint / kRamScale));
    const double now = static_cast<double>(state.interval_index) * cfg.interval_seconds;
    const double due = static_cast<double>(t.arrival_interval) * cfg.interval_seconds + t.deadline;
    const double need = (t.total_demand - t.progress) / t.max_rate;
    v.push_back(static_cast<Real>(std::tanh((due - now - need) / cfg.interval_seconds)));
  };
  for (const auto& p : state.active) push(p.task, p.host, false);
  for (const auto& a : arrivals) push(a, 0, true);
  return Tensor<Real>({state.active.size() + arrivals.size(), kTaskFeatures}, std::move(v));
}

template <class Real>
Tensor<Real> soft_placements(const Tensor<Real>& schedule, double sharpness) {
  return softmax(scale(schedule, sharpness));
}

template <class Real>
struct GeneratorResult {
  Tensor<Real> delta;  // p x m in (-1, 1)
  Tensor<Real> field;
};

template <class Real>
std::size_t decode_row(const Tensor<Real>& schedule_row, const Tensor<Real>& delta_row, std::size_t incumbent) {
  auto value = [&](std::size_t j) {
    return static_cast<double>(schedule_row.at(0, j)) + static_cast<double>(delta_row.at(0, j));
  };
  std::size_t best = incumbent;
  double best_v = value(incumbent);
  for (std::size_t j = 0; j < schedule_row.cols(); ++j) {
    if (value(j) > best_v) {
      best_v = value(j);
      best = j;
    }
  }
  return best;
}

// One-hot placement in value, soft placement in gradient.
template <class Real>
Tensor<Real> straight_through(const Tensor<Real>& soft, std::size_t hot) {
  std::vector<Real> v(soft.numel(), Real(0));
  v[hot] = 1;
  return add(Tensor<Real>({1, soft.numel()}, std::move(v)), sub(soft, soft.detach()));
}

// Tasks are placed in row order. Each task's keys and values see the host
// context plus the CPU load left by the tasks before it, so later tasks see
// where earlier ones went. `noise` (p x m), when given, is added to the field
// before the LayerNorm.
template <class Real>
GeneratorResult<Real> generate_delta(const GanModel<Real>& g, const GanInput<Real>& in,
                                     const Tensor<Real>* noise = nullptr) {
  const std::size_t p = in.schedule.rows(), m = in.schedule.cols();
  if (in.hosts.rows() != m || in.hosts.cols() != g.cfg.host_width()) throw ShapeError("generate_delta: host context");
  if (in.tasks.rows() != p || in.tasks.cols() != kTaskFeatures) throw ShapeError("generate_delta: task context");
  if (in.base_load.rows() != m || in.base_load.cols() != 1) throw ShapeError("generate_delta: base load");
  GeneratorResult<Real> r;
  if (p == 0) {
    r.delta = Tensor<Real>::zeros({0, m});
    r.field = r.delta;
    return r;
  }
  const Tensor<Real> queries_in = concat<Real>({matmul(in.schedule, in.hosts), in.tasks}, 1);
  std::vector<Tensor<Real>> queries;
  for (std::size_t h = 0; h < g.cfg.heads; ++h) queries.push_back(matmul(queries_in, g.gp(g.wq[h])));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(g.cfg.key_width));
  Tensor<Real> load = in.base_load;
  std::vector<Tensor<Real>> deltas, fields;
  for (std::size_t t = 0; t < p; ++t) {
    const Tensor<Real> ctx = concat<Real>({in.hosts, load}, 1);
    Tensor<Real> field = Tensor<Real>::zeros({1, m});
    for (std::size_t h = 0; h < g.cfg.heads; ++h) {
      const Tensor<Real> q = slice(queries[h], 0, t, t + 1);
      const Tensor<Real> a = softmax(scale(matmul(q, transpose(matmul(ctx, g.gp(g.wk[h])))), inv_sqrt));
      const Tensor<Real> v = add(matmul(ctx, g.gp(g.wv[h])), g.gp(g.bv[h]));
      field = add(field, mul(a, transpose(v)));
    }
    if (noise != nullptr) field = add(field, slice(*noise, 0, t, t + 1));
    const Tensor<Real> s_row = slice(in.schedule, 0, t, t + 1);
    const Tensor<Real> d =
        tanh(add(mul(normalize_rows(add(s_row, field)), g.gp(g.ln_gamma)), g.gp(g.ln_beta)));
    const auto hot = decode_row(s_row, d, static_cast<std::size_t>(in.incumbent[t]));
    if (t + 1 < p) {
      const Tensor<Real> placed =
          straight_through(soft_placements(add(s_row, d), g.cfg.placement_sharpness), hot);
      load = add(load, mul(transpose(sub(placed, s_row)), slice(slice(in.tasks, 0, t, t + 1), 1, 0, 1)));
    }
    deltas.push_back(d);
    fields.push_back(field);
  }
  r.delta = concat<Real>(deltas, 0);
  r.field = concat<Real>(fields, 0);
  return r;
}

template <class Real>
std::vector<int> decode_placements(const Tensor<Real>& schedule, const std::vector<int>& incumbent,
                                   const Tensor<Real>& delta) {
  const std::size_t p = incumbent.size();
  if (delta.rows() != p || schedule.rows() != p || (p > 0 && delta.cols() != schedule.cols())) {
    throw ShapeError("compose_schedule: delta shape does not match the schedule");
  }
  std::vector<int> place(p);
  for (std::size_t r = 0; r < p; ++r) {
    place[r] = static_cast<int>(
        decode_row(slice(schedule, 0, r, r + 1), slice(delta, 0, r, r + 1), static_cast<std::size_t>(incumbent[r])));
  }
  return place;
}

template <class Real>
Schedule compose_schedule(const Schedule& s, const Tensor<Real>& delta) {
  return Schedule::from_placements(s.hosts, s.task_ids, s.previous_host,
                                   decode_placements(schedule_tensor<Real>(s), s.placements(), delta));
}

template <class Real>
struct DiscriminatorResult {
  Tensor<Real> logits;  // 1 x 2: [V(S), V(N)]
  Tensor<Real> scores;  // D = [keep S, use N]
};

// Sum over hosts of g([context, containers / max, CPU share placed]).
// `placement` is p x m with rows summing to 1.
template <class Real>
Tensor<Real> placement_value(const GanModel<Real>& g, const GanInput<Real>& in, const Tensor<Real>& placement) {
  const std::size_t m = in.hosts.rows();
  Tensor<Real> occ = Tensor<Real>::zeros({m, 1});
  Tensor<Real> load = Tensor<Real>::zeros({m, 1});
  if (placement.rows() > 0) {
    const Tensor<Real> pt = transpose(placement);
    occ = scale(sum_axis(pt, 1), 1.0 / g.cfg.max_containers);
    load = matmul(pt, slice(in.tasks, 1, 0, 1));
  }
  const Tensor<Real> feats = concat<Real>({in.hosts, occ, load}, 1);
  const Tensor<Real> h = tanh(linear(feats, g.dp(g.d_w1), g.dp(g.d_b1)));
  return sum(matmul(h, g.dp(g.d_w2)));
}

// N is decoded to one-hot placements for the value and to soft placements
// for the gradient (straight-through), so the score is that of the schedule
// that would actually run.
template <class Real>
DiscriminatorResult<Real> discriminate(const GanModel<Real>& g, const GanInput<Real>& in, const Tensor<Real>& delta) {
  Tensor<Real> placed = in.schedule;
  if (in.schedule.rows() > 0) {
    const auto place = decode_placements(in.schedule, in.incumbent, delta);
    std::vector<Real> hard(in.schedule.numel(), Real(0));
    for (std::size_t r = 0; r < place.size(); ++r) hard[r * in.schedule.cols() + static_cast<std::size_t>(place[r])] = 1;
    const Tensor<Real> soft = soft_placements(add(in.schedule, delta), g.cfg.placement_sharpness);
    placed = add(Tensor<Real>({in.schedule.rows(), in.schedule.cols()}, std::move(hard)), sub(soft, soft.detach()));
  }
  DiscriminatorResult<Real> r;
  r.logits = concat<Real>({placement_value(g, in, in.schedule), placement_value(g, in, placed)}, 1);
  r.scores = softmax(r.logits);
  return r;
}

inline bool prefer_new(double d0, double d1) { return d1 >= d0; }

inline const Schedule& select_schedule(double d0, double d1, const Schedule& s, const Schedule& n) {
  return prefer_new(d0, d1) ? n : s;
}

// Binary cross-entropy of the discriminator against the co-simulation
// verdict, scaled by the host count.
template <class Real>
Tensor<Real> discriminator_loss(const DiscriminatorResult<Real>& d, bool new_is_better, std::size_t m) {
  const Tensor<Real> pick({1, 2}, new_is_better ? std::vector<Real>{0, 1} : std::vector<Real>{1, 0});
  return scale(neg(sum(mul(log_softmax(d.logits), pick))), static_cast<double>(m));
}

template <class Real>
Tensor<Real> generator_loss(const DiscriminatorResult<Real>& d, std::size_t m) {
  const Tensor<Real> pick({1, 2}, std::vector<Real>{0, 1});
  return scale(neg(sum(mul(log_softmax(d.logits), pick))), static_cast<double>(m));
}

// One discriminator step on a fixed delta. Only discriminator parameters
// move. Returns the loss before the step.
template <class Real>
double discriminator_update(GanModel<Real>& g, const GanInput<Real>& in, const Tensor<Real>& delta, bool label,
                            const AdamWConfig& opt) {
  g.discriminator.zero_grad();
  const Tensor<Real> loss = discriminator_loss(discriminate(g, in, delta.detach()), label, in.hosts.rows());
  backward(loss);
  adamw_step(g.discriminator, opt);
  g.discriminator.zero_grad();
  return loss.item();
}

// One generator step against the current discriminator. `delta` must still
// carry its graph back to the generator parameters. Only generator
// parameters move.
template <class Real>
double generator_update(GanModel<Real>& g, const GanInput<Real>& in, const Tensor<Real>& delta,
                        const AdamWConfig& opt) {
  g.generator.zero_grad();
  g.discriminator.zero_grad();
  const Tensor<Real> loss = generator_loss(discriminate(g, in, delta), in.hosts.rows());
  backward(loss);
  adamw_step(g.generator, opt);
  g.generator.zero_grad();
  g.discriminator.zero_grad();
  return loss.item();
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

template <class Real>
struct Decision {
  Schedule final_schedule;
  Schedule amended;  // argmax-decoded N
  DecisionRecord record;
  FpeOutput<Real> fpe;
  Tensor<Real> fault_embedding;
};

template <class Real>
GanInput<Real> gan_input(const Schedule& s, const Tensor<Real>& fault_embedding, const std::vector<bool>& detected,
                         const MetricsWindow& w, const std::vector<HostSpec>& specs, const Tensor<Real>& tasks,
                         double max_containers) {
  GanInput<Real> in;
  in.schedule = schedule_tensor<Real>(s);
  in.hosts = host_context(fault_embedding, detected, s, w, specs, max_containers);
  in.tasks = tasks;
  in.incumbent = s.placements();
  const std::size_t m = s.hosts, cpu_col = fault_embedding.cols() + 2;
  std::vector<Real> load(m);
  for (std::size_t h = 0; h < m; ++h) load[h] = in.hosts.at(h, cpu_col);
  for (std::size_t r = 0; r < in.incumbent.size(); ++r) {
    if (tasks.at(r, 2) > Real(0)) load[static_cast<std::size_t>(in.incumbent[r])] += tasks.at(r, 0);
  }
  in.base_load = Tensor<Real>({m, 1}, std::move(load));
  return in;
}

template <class Real>
std::vector<bool> detections(const Tensor<Real>& scores) {
  std::vector<bool> d(scores.rows());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = fault_detected(scores.at(i, 0), scores.at(i, 1));
  return d;
}

inline std::size_t migration_count(const Schedule& from, const Schedule& to) {
  const auto a = from.placements(), b = to.placements();
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

// Encoder forward, generator, discriminator and selection. Never touches the
// simulator. `carry` is read only; the caller advances it with the returned
// encoder output.
template <class Real>
Decision<Real> infer(const FpeModel<Real>& fpe, const GanModel<Real>& gan, const MetricsWindow& w,
                     const ScheduleGraph& graph, const Schedule& s, const std::vector<HostSpec>& specs,
                     const Tensor<Real>& tasks, const Tensor<Real>& carry,
                     std::int64_t interval) {
  Decision<Real> d;
  d.fpe = fpe_forward(fpe, flatten_window<Real>(w), graph, carry);
  d.fault_embedding = build_fault_embedding(d.fpe.scores, d.fpe.embeddings);
  const auto detected = detections(d.fpe.scores);
  const auto in = gan_input(s, d.fault_embedding, detected, w, specs, tasks, gan.cfg.max_containers);
  const auto gen = generate_delta(gan, in);
  d.amended = compose_schedule(s, gen.delta);
  const auto disc = discriminate(gan, in, gen.delta);
  d.record.interval = interval;
  d.record.fault_predicted = std::any_of(detected.begin(), detected.end(), [](bool b) { return b; });
  d.record.d0 = disc.scores.at(0, 0);
  d.record.d1 = disc.scores.at(0, 1);
  d.record.accepted = prefer_new(d.record.d0, d.record.d1);
  d.final_schedule = select_schedule(d.record.d0, d.record.d1, s, d.amended);
  d.record.migrations = migration_count(s, d.final_schedule);
  return d;
}

}  // namespace pregan
