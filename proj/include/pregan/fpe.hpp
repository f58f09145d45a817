#pragma once

// Fault prototype encoder: a graph-attention branch and a GRU branch over the
// recent metrics window, fused by multi-head attention keyed on the schedule,
// followed by per-host detection and prototype-embedding decoders.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pregan/errors.hpp"
#include "pregan/nn.hpp"
#include "pregan/schedule.hpp"
#include "pregan/sim.hpp"
#include "pregan/tensor.hpp"

namespace pregan {

struct FpeConfig {
  std::size_t k = 5;  // window length
  std::size_t n = kFeatureCount;
  std::size_t c = 3;  // fault classes
  std::size_t embed = 8;
  std::size_t hidden = 16;  // GAT / GRU width
  std::size_t fused = 16;
  std::size_t heads = 2;
  std::size_t ff_hidden = 32;
  double max_containers = 12.0;  // schedule-view normalizer

  void validate() const {
    if (k == 0 || n == 0 || c == 0 || embed == 0 || hidden == 0 || fused == 0 || heads == 0 || ff_hidden == 0) {
      throw ParameterError("encoder sizes must be positive");
    }
    if (fused % heads != 0) throw ParameterError("fused width must divide evenly across heads");
  }
};

// Per-host schedule view: [1, occupancy, new tasks, incoming, outgoing].
inline constexpr std::size_t kScheduleViewWidth = 5;

struct ScheduleGraph {
  std::size_t m = 0;
  std::vector<double> view;               // m x kScheduleViewWidth
  std::vector<std::pair<int, int>> edges;  // migration src -> dst
};

inline ScheduleGraph schedule_graph(const Schedule& s, double max_containers) {
  ScheduleGraph g;
  g.m = s.hosts;
  g.view.assign(g.m * kScheduleViewWidth, 0.0);
  const auto place = s.placements();
  for (std::size_t h = 0; h < g.m; ++h) g.view[h * kScheduleViewWidth] = 1.0;
  const double inv = 1.0 / max_containers;
  for (std::size_t r = 0; r < s.tasks(); ++r) {
    const auto dst = static_cast<std::size_t>(place[r]);
    const int prev = r < s.previous_host.size() ? s.previous_host[r] : -1;
    g.view[dst * kScheduleViewWidth + 1] += inv;
    if (prev < 0) {
      g.view[dst * kScheduleViewWidth + 2] += inv;
    } else if (static_cast<std::size_t>(prev) != dst) {
      g.view[dst * kScheduleViewWidth + 3] += inv;
      g.view[static_cast<std::size_t>(prev) * kScheduleViewWidth + 4] += inv;
      g.edges.emplace_back(prev, static_cast<int>(dst));
    }
  }
  for (auto& v : g.view) v = std::min(v, 1.0);
  return g;
}

template <class Real = float>
struct FpeModel {
  FpeConfig cfg;
  ParameterStore<Real> store;
  std::size_t gat_theta = 0, gat_src = 0, gat_dst = 0;
  std::size_t gru_wz = 0, gru_bz = 0, gru_wr = 0, gru_br = 0, gru_wn = 0, gru_bn = 0;
  std::vector<std::size_t> wq, wk, wv;
  std::size_t wo = 0;
  FeedForward<Real> detector, prototype;

  static FpeModel create(const FpeConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    FpeModel m;
    m.cfg = cfg;
    std::mt19937_64 rng(seed);
    const std::size_t in = cfg.k * cfg.n;
    const std::size_t d = cfg.hidden;
    auto& s = m.store;
    m.gat_theta = s.add("gat.theta", glorot<Real>(in, d, rng));
    m.gat_src = s.add("gat.a_src", glorot<Real>(d, 1, rng));
    m.gat_dst = s.add("gat.a_dst", glorot<Real>(d, 1, rng));
    m.gru_wz = s.add("gru.w_z", glorot<Real>(in + d, d, rng));
    m.gru_bz = s.add("gru.b_z", Tensor<Real>::zeros({1, d}));
    m.gru_wr = s.add("gru.w_r", glorot<Real>(in + d, d, rng));
    m.gru_br = s.add("gru.b_r", Tensor<Real>::zeros({1, d}));
    m.gru_wn = s.add("gru.w_n", glorot<Real>(in + d, d, rng));
    m.gru_bn = s.add("gru.b_n", Tensor<Real>::zeros({1, d}));
    const std::size_t dh = cfg.fused / cfg.heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string p = "mha.head" + std::to_string(h);
      m.wq.push_back(s.add(p + ".w_q", glorot<Real>(kScheduleViewWidth, dh, rng)));
      m.wk.push_back(s.add(p + ".w_k", glorot<Real>(kScheduleViewWidth, dh, rng)));
      m.wv.push_back(s.add(p + ".w_v", glorot<Real>(2 * d, dh, rng)));
    }
    m.wo = s.add("mha.w_o", glorot<Real>(cfg.fused, cfg.fused, rng));
    const std::size_t dec_in = cfg.fused + 2 * d;
    m.detector = FeedForward<Real>::create(s, "detector", dec_in, cfg.ff_hidden, 2, rng);
    m.prototype = FeedForward<Real>::create(s, "prototype", dec_in, cfg.ff_hidden, cfg.embed, rng);
    return m;
  }

  const Tensor<Real>& p(std::size_t i) const { return store.tensor(i); }

  GruParams<Real> gru() const {
    return {p(gru_wz), p(gru_bz), p(gru_wr), p(gru_br), p(gru_wn), p(gru_bn)};
  }
};

// Rows are hosts, columns the window flattened oldest step first.
template <class Real>
Tensor<Real> flatten_window(const MetricsWindow& w) {
  std::vector<Real> v(w.m * w.k * w.n);
  for (std::size_t h = 0; h < w.m; ++h)
    for (std::size_t t = 0; t < w.k; ++t)
      for (std::size_t f = 0; f < w.n; ++f) v[(h * w.k + t) * w.n + f] = static_cast<Real>(w.at(t, h, f));
  return Tensor<Real>({w.m, w.k * w.n}, std::move(v));
}

template <class Real>
struct GatResult {
  Tensor<Real> output;     // m x d
  Tensor<Real> attention;  // m x (m + 1); last column is the global node
};

// Additive mask over [hosts..., global]: a host attends to itself, the global
// node, and every host that migrates a task into it.
template <class Real>
Tensor<Real> gat_mask(std::size_t m, const std::vector<std::pair<int, int>>& edges) {
  std::vector<Real> v(m * (m + 1), static_cast<Real>(-1e9));
  for (std::size_t i = 0; i < m; ++i) {
    v[i * (m + 1) + i] = 0;
    v[i * (m + 1) + m] = 0;
  }
  for (const auto& [src, dst] : edges) v[static_cast<std::size_t>(dst) * (m + 1) + static_cast<std::size_t>(src)] = 0;
  return Tensor<Real>({m, m + 1}, std::move(v));
}

template <class Real>
GatResult<Real> gat_encode(const FpeModel<Real>& model, const Tensor<Real>& x, const ScheduleGraph& graph) {
  const std::size_t m = x.rows();
  if (graph.m != m) throw ShapeError("gat_encode: schedule and window host counts differ");
  if (x.cols() != model.cfg.k * model.cfg.n) throw ShapeError("gat_encode: window width mismatch");
  const Tensor<Real> z = matmul(x, model.p(model.gat_theta));
  const Tensor<Real> nodes = concat<Real>({z, mean_axis(z, 0)}, 0);
  const Tensor<Real> src = matmul(nodes, model.p(model.gat_src));
  const Tensor<Real> dst = matmul(z, model.p(model.gat_dst));
  const Tensor<Real> spread = matmul(Tensor<Real>::full({m, 1}, Real(1)), transpose(src));
  const Tensor<Real> mask = gat_mask<Real>(m, graph.edges);
  const Tensor<Real> att = softmax(add(tanh(add(spread, dst)), mask));
  return {sigmoid(matmul(att, nodes)), att};
}

template <class Real>
Tensor<Real> gru_encode(const FpeModel<Real>& model, const Tensor<Real>& x, const Tensor<Real>& carry) {
  return gru_cell(x, carry, model.gru());
}

template <class Real>
struct FuseResult {
  Tensor<Real> output;                 // m x fused
  std::vector<Tensor<Real>> attention;  // per head, m x m
};

template <class Real>
Tensor<Real> schedule_view(const ScheduleGraph& g) {
  return Tensor<Real>({g.m, kScheduleViewWidth}, std::vector<Real>(g.view.begin(), g.view.end()));
}

template <class Real>
FuseResult<Real> fuse(const FpeModel<Real>& model, const Tensor<Real>& view, const Tensor<Real>& o1,
                      const Tensor<Real>& o2) {
  const Tensor<Real> values = concat<Real>({o1, o2}, 1);
  FuseResult<Real> out;
  std::vector<Tensor<Real>> heads;
  for (std::size_t h = 0; h < model.cfg.heads; ++h) {
    auto r = scaled_dot_attention(matmul(view, model.p(model.wq[h])), matmul(view, model.p(model.wk[h])),
                                  matmul(values, model.p(model.wv[h])));
    heads.push_back(r.output);
    out.attention.push_back(r.weights);
  }
  out.output = matmul(concat<Real>(heads, 1), model.p(model.wo));
  return out;
}

template <class Real>
struct DecodeResult {
  Tensor<Real> logits;  // m x 2
  Tensor<Real> scores;  // D^A, m x 2
  Tensor<Real> embeddings;  // P, m x E
};

// Both decoders see the fused encoding alongside the two branch encodings.
template <class Real>
DecodeResult<Real> decode_hosts(const FpeModel<Real>& model, const Tensor<Real>& o, const Tensor<Real>& o1,
                                const Tensor<Real>& o2) {
  const Tensor<Real> in = concat<Real>({o, o1, o2}, 1);
  DecodeResult<Real> r;
  r.logits = model.detector(model.store, in);
  r.scores = softmax(r.logits);
  r.embeddings = sigmoid(model.prototype(model.store, in));
  return r;
}

template <class Real>
struct FpeOutput {
  Tensor<Real> o1, o2, fused;
  Tensor<Real> logits, scores, embeddings;
  Tensor<Real> gat_attention;
  std::vector<Tensor<Real>> fuse_attention;
};

template <class Real>
FpeOutput<Real> fpe_forward(const FpeModel<Real>& model, const Tensor<Real>& x, const ScheduleGraph& graph,
                            const Tensor<Real>& carry) {
  if (carry.rows() != x.rows() || carry.cols() != model.cfg.hidden) {
    throw ShapeError("fpe_forward: carry must be m x hidden");
  }
  FpeOutput<Real> out;
  auto gat = gat_encode(model, x, graph);
  out.o1 = gat.output;
  out.gat_attention = gat.attention;
  out.o2 = gru_encode(model, x, carry);
  auto fz = fuse(model, schedule_view<Real>(graph), out.o1, out.o2);
  out.fused = fz.output;
  out.fuse_attention = std::move(fz.attention);
  auto dec = decode_hosts(model, out.fused, out.o1, out.o2);
  out.logits = dec.logits;
  out.scores = dec.scores;
  out.embeddings = dec.embeddings;
  return out;
}

inline bool fault_detected(double s0, double s1) { return s1 >= s0; }

// Row i is P_i where a fault is detected, zero elsewhere.
template <class Real>
Tensor<Real> build_fault_embedding(const Tensor<Real>& scores, const Tensor<Real>& embeddings) {
  const std::size_t m = scores.rows(), e = embeddings.cols();
  if (embeddings.rows() != m || scores.cols() != 2) throw ShapeError("build_fault_embedding: shape mismatch");
  std::vector<Real> v(m * e, Real(0));
  for (std::size_t i = 0; i < m; ++i) {
    if (!fault_detected(scores.at(i, 0), scores.at(i, 1))) continue;
    for (std::size_t j = 0; j < e; ++j) v[i * e + j] = embeddings.at(i, j);
  }
  return Tensor<Real>({m, e}, std::move(v));
}

// ---------------------------------------------------------------------------
// Prototypes
// ---------------------------------------------------------------------------

struct PrototypeSet {
  // vectors[0] is the unused no-fault slot.
  std::vector<std::vector<double>> vectors;
  double alpha = 0.9;
  double epsilon = 0.05;

  static PrototypeSet random(std::size_t classes, std::size_t embed, std::mt19937_64& rng, double alpha = 0.9,
                             double epsilon = 0.05) {
    PrototypeSet p;
    p.alpha = alpha;
    p.epsilon = epsilon;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    p.vectors.assign(classes + 1, std::vector<double>(embed));
    for (auto& v : p.vectors)
      for (auto& x : v) x = u(rng);
    return p;
  }

  std::size_t classes() const { return vectors.empty() ? 0 : vectors.size() - 1; }
  std::size_t embed() const { return vectors.empty() ? 0 : vectors[0].size(); }
  void decay() { alpha *= 1.0 - epsilon; }
};

template <class Vec>
double euclidean(const Vec& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Nearest prototype among classes 1..c; ties go to the smaller index.
template <class Vec>
int classify(const Vec& embedding, const PrototypeSet& protos) {
  int best = 1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j < protos.vectors.size(); ++j) {
    const double d = euclidean(embedding, protos.vectors[j]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

template <class Real>
std::vector<Real> row_values(const Tensor<Real>& t, std::size_t r) {
  return std::vector<Real>(t.values().begin() + static_cast<std::ptrdiff_t>(r * t.cols()),
                           t.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols()));
}

// Moves the labelled class prototype toward each faulty host's embedding when
// that prototype is already the nearest one. Returns the number of updates.
template <class Real>
std::size_t update_prototypes(const Tensor<Real>& embeddings, const std::vector<int>& labels, PrototypeSet& protos,
                              double alpha) {
  std::size_t updates = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] <= 0) continue;
    const auto row = row_values(embeddings, i);
    if (classify(row, protos) != labels[i]) continue;
    auto& pc = protos.vectors[static_cast<std::size_t>(labels[i])];
    for (std::size_t j = 0; j < pc.size(); ++j) pc[j] = (1.0 - alpha) * pc[j] + alpha * static_cast<double>(row[j]);
    ++updates;
  }
  return updates;
}

template <class Real>
struct FpeLosses {
  Tensor<Real> detection;  // negative log-likelihood of the true detection label
  Tensor<Real> triplet;
  Tensor<Real> total() const { return add(detection, triplet); }
};

// How the false-class distances enter the triplet term. With kMean the true
// prototype itself minimizes each host's term; kSum can place the minimum
// nearer a false prototype once there are three or more classes.
enum class NegativeReduction { kMean, kSum };

template <class Real>
FpeLosses<Real> fpe_losses(const Tensor<Real>& logits, const Tensor<Real>& embeddings, const std::vector<int>& labels,
                           const PrototypeSet& protos, NegativeReduction negatives = NegativeReduction::kMean) {
  const std::size_t m = logits.rows();
  const std::size_t c = protos.classes();
  if (labels.size() != m) throw DataError("label count does not match host count");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) > c) throw DataError("fault label out of range: " + std::to_string(l));
  std::vector<Real> pick(m * 2, Real(0));
  for (std::size_t i = 0; i < m; ++i) pick[i * 2 + (labels[i] > 0 ? 1 : 0)] = Real(1);
  FpeLosses<Real> out;
  out.detection = neg(sum(mul(log_softmax(logits), Tensor<Real>({m, 2}, pick))));

  std::vector<Tensor<Real>> terms;
  const std::size_t e = embeddings.cols();
  const double neg_weight =
      negatives == NegativeReduction::kMean && c > 1 ? 1.0 / static_cast<double>(c - 1) : 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] <= 0) continue;
    const Tensor<Real> row = slice(embeddings, 0, i, i + 1);
    std::vector<Real> stacked;
    std::vector<Real> sign;
    for (std::size_t j = 1; j <= c; ++j) {
      stacked.insert(stacked.end(), protos.vectors[j].begin(), protos.vectors[j].end());
      sign.push_back(static_cast<int>(j) == labels[i] ? Real(1) : Real(-neg_weight));
    }
    const Tensor<Real> pc({c, e}, std::move(stacked));
    const Tensor<Real> dist = row_l2_norm(sub(matmul(Tensor<Real>::full({c, 1}, Real(1)), row), pc));
    terms.push_back(sum(mul(dist, Tensor<Real>({c, 1}, std::move(sign)))));
  }
  out.triplet = terms.empty() ? Tensor<Real>::scalar(Real(0)) : sum(concat<Real>(terms, 0));
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct FpeSample {
  MetricsWindow window;
  ScheduleGraph graph;
  std::vector<int> labels;
};

struct FpeTrainConfig {
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  double validation_fraction = 0.1;
  AdamWConfig optimizer{};
  double alpha = 0.9;
  double epsilon = 0.05;
  NegativeReduction negatives = NegativeReduction::kMean;
  std::uint64_t seed = 0;
};

struct FpeEpochStats {
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct FpeTrainReport {
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
  std::size_t prototype_updates = 0;
  std::vector<FpeEpochStats> history;
};

template <class Real>
Tensor<Real> zero_carry(const FpeModel<Real>& model, std::size_t m) {
  return Tensor<Real>::zeros({m, model.cfg.hidden});
}

template <class Real>
Tensor<Real> next_carry(const FpeOutput<Real>& out) {
  return out.o2.detach();
}

inline void check_sample(const FpeSample& s, const FpeConfig& cfg) {
  if (s.window.k != cfg.k || s.window.n != cfg.n) throw DataError("window shape does not match the encoder");
  if (s.graph.m != s.window.m || s.labels.size() != s.window.m) throw DataError("sample host counts disagree");
}

// Trains on `data` in order, holding out the tail as validation for early
// stopping. The GRU carry restarts at zero every epoch.
template <class Real>
FpeTrainReport train_fpe(FpeModel<Real>& model, PrototypeSet& protos, const std::vector<FpeSample>& data,
                         const FpeTrainConfig& tc) {
  if (data.empty()) throw DataError("empty training dataset");
  for (const auto& s : data) check_sample(s, model.cfg);
  if (protos.vectors.empty()) {
    std::mt19937_64 rng(tc.seed);
    protos = PrototypeSet::random(model.cfg.c, model.cfg.embed, rng, tc.alpha, tc.epsilon);
  }
  const std::size_t n_val = std::min(data.size() - 1,
                                     static_cast<std::size_t>(std::floor(tc.validation_fraction * static_cast<double>(data.size()))));
  const std::size_t n_train = data.size() - n_val;

  FpeTrainReport report;
  report.best_validation_loss = std::numeric_limits<double>::infinity();
  ParameterStore<Real> best_store = model.store;
  PrototypeSet best_protos = protos;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    FpeEpochStats stats;
    std::optional<Tensor<Real>> carry;
    std::size_t carry_m = 0;
    for (std::size_t t = 0; t < n_train; ++t) {
      const auto& s = data[t];
      if (!carry || carry_m != s.window.m) {
        carry = zero_carry(model, s.window.m);
        carry_m = s.window.m;
      }
      model.store.zero_grad();
      const auto out = fpe_forward(model, flatten_window<Real>(s.window), s.graph, *carry);
      const auto losses = fpe_losses(out.logits, out.embeddings, s.labels, protos, tc.negatives);
      const Tensor<Real> loss = losses.total();
      stats.train_loss += loss.item();
      report.prototype_updates += update_prototypes(out.embeddings, s.labels, protos, protos.alpha);
      backward(loss);
      adamw_step(model.store, tc.optimizer);
      protos.decay();
      carry = next_carry(out);
    }
    for (std::size_t t = n_train; t < data.size(); ++t) {
      const auto& s = data[t];
      if (!carry || carry_m != s.window.m) {
        carry = zero_carry(model, s.window.m);
        carry_m = s.window.m;
      }
      const auto out = fpe_forward(model, flatten_window<Real>(s.window), s.graph, *carry);
      stats.validation_loss += fpe_losses(out.logits, out.embeddings, s.labels, protos, tc.negatives).total().item();
      carry = next_carry(out);
    }
    stats.train_loss /= static_cast<double>(n_train);
    if (n_val > 0) stats.validation_loss /= static_cast<double>(n_val);
    else stats.validation_loss = stats.train_loss;
    report.history.push_back(stats);
    report.epochs = epoch + 1;
    if (stats.validation_loss < report.best_validation_loss) {
      report.best_validation_loss = stats.validation_loss;
      report.best_epoch = epoch + 1;
      best_store = model.store;
      best_protos = protos;
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      break;
    }
  }
  model.store = best_store;
  protos = best_protos;
  return report;
}

// ---------------------------------------------------------------------------
// Inference over a sequence
// ---------------------------------------------------------------------------

struct HostPrediction {
  double score0 = 0.0, score1 = 0.0;
  bool detected = false;
  int predicted_class = 1;  // nearest prototype, independent of detection
};

// Runs the encoder over consecutive samples with a fresh carry and returns
// per-interval, per-host predictions.
template <class Real>
std::vector<std::vector<HostPrediction>> predict_sequence(const FpeModel<Real>& model, const PrototypeSet& protos,
                                                          const std::vector<FpeSample>& data,
                                                          std::size_t begin = 0,
                                                          std::size_t end = std::numeric_limits<std::size_t>::max()) {
  end = std::min(end, data.size());
  std::vector<std::vector<HostPrediction>> out;
  std::optional<Tensor<Real>> carry;
  for (std::size_t t = begin; t < end; ++t) {
    const auto& s = data[t];
    check_sample(s, model.cfg);
    if (!carry || carry->rows() != s.window.m) carry = zero_carry(model, s.window.m);
    const auto f = fpe_forward(model, flatten_window<Real>(s.window), s.graph, *carry);
    std::vector<HostPrediction> row(s.window.m);
    for (std::size_t i = 0; i < s.window.m; ++i) {
      auto& h = row[i];
      h.score0 = f.scores.at(i, 0);
      h.score1 = f.scores.at(i, 1);
      h.detected = fault_detected(h.score0, h.score1);
      h.predicted_class = classify(row_values(f.embeddings, i), protos);
    }
    out.push_back(std::move(row));
    carry = next_carry(f);
  }
  return out;
}

}  // namespace pregan
