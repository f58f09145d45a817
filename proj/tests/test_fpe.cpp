#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pregan/fpe.hpp"
#include "pregan/gradcheck.hpp"

namespace pregan {
namespace {

using D = double;

FpeConfig toy_config() {
  FpeConfig c;
  c.k = 2;
  c.n = 4;
  c.embed = 4;
  return c;
}

MetricsWindow random_window(std::size_t k, std::size_t m, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MetricsWindow w;
  w.k = k;
  w.m = m;
  w.n = n;
  for (std::size_t i = 0; i < k * m * n; ++i) w.data.push_back(static_cast<float>(u(rng)));
  return w;
}

ScheduleGraph idle_graph(std::size_t m) { return schedule_graph(Schedule::from_placements(m, {}, {}, {}), 12.0); }

void zero_named(FpeModel<D>& model, const std::string& prefix) {
  for (auto& p : model.store.entries())
    if (p.name.rfind(prefix, 0) == 0)
      for (auto& v : p.tensor.mutable_values()) v = 0.0;
}

TEST(GatTest, ZeroThetaGivesHalf) {
  auto model = FpeModel<D>::create(FpeConfig{}, 1);
  zero_named(model, "gat.theta");
  std::mt19937_64 rng(2);
  const auto w = random_window(5, 4, 8, rng);
  const auto r = gat_encode(model, flatten_window<D>(w), idle_graph(4));
  for (double v : r.output.values()) EXPECT_EQ(v, 0.5);
}

TEST(GatTest, StarGraphIsFiniteAndNormalized) {
  auto model = FpeModel<D>::create(FpeConfig{}, 1);
  std::mt19937_64 rng(3);
  const auto w = random_window(5, 6, 8, rng);
  const auto r = gat_encode(model, flatten_window<D>(w), idle_graph(6));
  for (double v : r.output.values()) EXPECT_TRUE(std::isfinite(v));
  for (std::size_t i = 0; i < 6; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j <= 6; ++j) {
      row += r.attention.at(i, j);
      if (j != i && j != 6) EXPECT_LT(r.attention.at(i, j), 1e-12);
    }
    EXPECT_NEAR(row, 1.0, 1e-12);
  }
}

TEST(GatTest, SingleHostIsSigmoidOfOwnProjection) {
  auto model = FpeModel<D>::create(FpeConfig{}, 4);
  std::mt19937_64 rng(5);
  const auto w = random_window(5, 1, 8, rng);
  const auto x = flatten_window<D>(w);
  const auto r = gat_encode(model, x, idle_graph(1));
  const auto& theta = model.p(model.gat_theta);
  for (std::size_t j = 0; j < model.cfg.hidden; ++j) {
    double z = 0.0;
    for (std::size_t a = 0; a < x.cols(); ++a) z += x.at(0, a) * theta.at(a, j);
    EXPECT_NEAR(r.output.at(0, j), 1.0 / (1.0 + std::exp(-z)), 1e-12);
  }
}

TEST(GatTest, MigrationEdgeOpensNeighborhood) {
  auto model = FpeModel<D>::create(FpeConfig{}, 1);
  std::mt19937_64 rng(6);
  const auto w = random_window(5, 3, 8, rng);
  const auto g = schedule_graph(Schedule::from_placements(3, {7}, {0}, {2}), 12.0);
  ASSERT_EQ(g.edges.size(), 1u);
  const auto r = gat_encode(model, flatten_window<D>(w), g);
  EXPECT_GT(r.attention.at(2, 0), 1e-6);
  EXPECT_LT(r.attention.at(0, 2), 1e-12);
}

TEST(GruTest, ZeroParamsHalveCarry) {
  auto model = FpeModel<D>::create(FpeConfig{}, 1);
  zero_named(model, "gru.");
  std::mt19937_64 rng(7);
  const auto x = flatten_window<D>(random_window(5, 3, 8, rng));
  std::vector<double> c(3 * 16);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::sin(static_cast<double>(i));
  const auto out = gru_encode(model, x, Tensor<D>({3, 16}, c));
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_DOUBLE_EQ(out.values()[i], 0.5 * c[i]);
  const auto zero = gru_encode(model, x, Tensor<D>::zeros({3, 16}));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(GruTest, CarryChangesOutput) {
  auto model = FpeModel<D>::create(FpeConfig{}, 1);
  std::mt19937_64 rng(8);
  const auto x = flatten_window<D>(random_window(5, 2, 8, rng));
  const auto a = gru_encode(model, x, Tensor<D>::zeros({2, 16}));
  const auto b = gru_encode(model, x, Tensor<D>::full({2, 16}, 0.7));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.values()[i] - b.values()[i]);
  EXPECT_GT(diff, 1e-3);
}

TEST(FuseTest, UniformAttentionAveragesValues) {
  FpeConfig cfg;
  cfg.heads = 1;
  cfg.hidden = 2;
  cfg.fused = 4;
  auto model = FpeModel<D>::create(cfg, 1);
  auto set_identity = [&](std::size_t idx) {
    auto v = model.store.tensor(idx).mutable_values();
    const std::size_t cols = model.store.tensor(idx).cols();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i / cols == i % cols) ? 1.0 : 0.0;
  };
  set_identity(model.wq[0]);
  set_identity(model.wk[0]);
  set_identity(model.wv[0]);
  set_identity(model.wo);
  const auto view = schedule_view<D>(idle_graph(3));  // identical rows
  const Tensor<D> o1({3, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  const Tensor<D> o2({3, 2}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  const auto r = fuse(model, view, o1, o2);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.output.at(i, 0), 0.3, 1e-12);
    EXPECT_NEAR(r.output.at(i, 1), 0.4, 1e-12);
    EXPECT_NEAR(r.output.at(i, 2), 3.0, 1e-12);
    EXPECT_NEAR(r.output.at(i, 3), 4.0, 1e-12);
  }
}

TEST(FuseTest, ZeroValueProjectionGivesZero) {
  auto model = FpeModel<D>::create(FpeConfig{}, 1);
  for (auto idx : model.wv)
    for (auto& v : model.store.tensor(idx).mutable_values()) v = 0.0;
  std::mt19937_64 rng(9);
  const auto x = flatten_window<D>(random_window(5, 4, 8, rng));
  const auto g = idle_graph(4);
  const auto o1 = gat_encode(model, x, g).output;
  const auto r = fuse(model, schedule_view<D>(g), o1, o1);
  for (double v : r.output.values()) EXPECT_EQ(v, 0.0);
}

// Permuting the hosts of window and schedule permutes every per-host output.
TEST(FpeTest, HostPermutationEquivariance) {
  auto model = FpeModel<D>::create(FpeConfig{}, 11);
  std::mt19937_64 rng(12);
  const std::size_t m = 4;
  const auto w = random_window(5, m, 8, rng);
  const std::vector<int> perm = {2, 0, 3, 1};  // new host i = old host perm[i]
  MetricsWindow wp = w;
  for (std::size_t t = 0; t < w.k; ++t)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t f = 0; f < w.n; ++f)
        wp.data[(t * m + i) * w.n + f] = w.at(t, static_cast<std::size_t>(perm[i]), f);
  std::vector<int> inverse(m);
  for (std::size_t i = 0; i < m; ++i) inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  const auto s = Schedule::from_placements(m, {1, 2, 3, 4}, {0, -1, 1, 3}, {0, 2, 3, 3});
  std::vector<int> prev_p, place_p;
  for (int h : s.previous_host) prev_p.push_back(h < 0 ? -1 : inverse[static_cast<std::size_t>(h)]);
  for (int h : s.placements()) place_p.push_back(inverse[static_cast<std::size_t>(h)]);
  const auto sp = Schedule::from_placements(m, s.task_ids, prev_p, place_p);

  const auto a = fpe_forward(model, flatten_window<D>(w), schedule_graph(s, 12.0), Tensor<D>::zeros({m, 16}));
  const auto b = fpe_forward(model, flatten_window<D>(wp), schedule_graph(sp, 12.0), Tensor<D>::zeros({m, 16}));
  for (std::size_t i = 0; i < m; ++i) {
    const auto old = static_cast<std::size_t>(perm[i]);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(b.scores.at(i, j), a.scores.at(old, j), 1e-12);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(b.embeddings.at(i, j), a.embeddings.at(old, j), 1e-12);
  }
}

TEST(DecodeTest, ZeroWeightsGiveHalf) {
  auto model = FpeModel<D>::create(FpeConfig{}, 1);
  zero_named(model, "detector.");
  zero_named(model, "prototype.");
  const auto o = Tensor<D>::full({3, 16}, 0.3);
  const auto r = decode_hosts(model, o, o, o);
  for (double v : r.scores.values()) EXPECT_EQ(v, 0.5);
  for (double v : r.embeddings.values()) EXPECT_EQ(v, 0.5);
}

TEST(DecodeTest, RowsSumToOneAndHostsAreIndependent) {
  auto model = FpeModel<D>::create(FpeConfig{}, 1);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(4 * 16);
  for (auto& x : v) x = u(rng);
  const Tensor<D> o4({4, 16}, v);
  std::vector<double> v3(v.begin(), v.begin() + 48);
  const Tensor<D> o3({3, 16}, v3);
  const auto a = decode_hosts(model, o4, o4, o4);
  const auto b = decode_hosts(model, o3, o3, o3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.scores.at(i, 0) + a.scores.at(i, 1), 1.0, 1e-12);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.scores.at(i, 1), b.scores.at(i, 1));
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(a.embeddings.at(i, j), b.embeddings.at(i, j));
  }
}

TEST(FaultEmbeddingTest, MaskFollowsDetection) {
  const Tensor<D> scores({3, 2}, {0.7, 0.3, 0.3, 0.7, 0.5, 0.5});
  const Tensor<D> p({3, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  const auto ef = build_fault_embedding(scores, p);
  EXPECT_EQ(ef.at(0, 0), 0.0);
  EXPECT_EQ(ef.at(0, 1), 0.0);
  EXPECT_EQ(ef.at(1, 0), 0.3);
  EXPECT_EQ(ef.at(1, 1), 0.4);
  EXPECT_EQ(ef.at(2, 0), 0.5);
  EXPECT_EQ(ef.at(2, 1), 0.6);
}

PrototypeSet corners(std::size_t e) {
  PrototypeSet p;
  p.vectors.assign(4, std::vector<double>(e, 0.0));
  for (std::size_t j = 0; j < e; ++j) {
    p.vectors[2][j] = 1.0;
    p.vectors[3][j] = j % 2 == 0 ? 1.0 : 0.0;
  }
  return p;
}

TEST(ClassifyTest, ExactAndTieAndCorner) {
  const auto p = corners(4);
  EXPECT_EQ(classify(p.vectors[2], p), 2);
  // Midway between class 1 (zeros) and class 2 (ones) at equal distance from 3.
  PrototypeSet two;
  two.vectors = {{0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}};
  EXPECT_EQ(classify(std::vector<double>{0.5, 0.5}, two), 1);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(4);
    for (std::size_t j = 0; j < 4; ++j) x[j] = p.vectors[3][j] + u(rng);
    int brute = 1;
    double best = 1e9;
    for (int c = 1; c <= 3; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < 4; ++j) d += (x[j] - p.vectors[static_cast<std::size_t>(c)][j]) * (x[j] - p.vectors[static_cast<std::size_t>(c)][j]);
      if (d < best) {
        best = d;
        brute = c;
      }
    }
    EXPECT_EQ(classify(x, p), brute);
    EXPECT_EQ(brute, 3);
  }
}

TEST(LossTest, ConfidentCorrectDetectionIsNearZero) {
  const Tensor<D> logits({2, 2}, {30.0, -30.0, -30.0, 30.0});
  const Tensor<D> emb({2, 4}, std::vector<double>(8, 0.5));
  const auto p = corners(4);
  const auto l = fpe_losses(logits, emb, {0, 1}, p);
  EXPECT_LT(l.detection.item(), 1e-12);
  EXPECT_GE(l.detection.item(), 0.0);
}

TEST(LossTest, SingleClassOnPrototypeIsZero) {
  PrototypeSet p;
  p.vectors = {{0.1, 0.1}, {0.3, 0.6}};
  const Tensor<D> emb({2, 2}, {0.3, 0.6, 0.3, 0.6});
  const auto l = fpe_losses(Tensor<D>::zeros({2, 2}), emb, {1, 1}, p);
  EXPECT_EQ(l.triplet.item(), 0.0);
}

TEST(LossTest, TripletMatchesHandComputation) {
  PrototypeSet p;
  p.vectors = {{0.5, 0.5}, {0.0, 0.0}, {1.0, 0.0}};
  const Tensor<D> emb({2, 2}, {0.3, 0.4, 0.9, 0.9});
  const auto l = fpe_losses(Tensor<D>::zeros({2, 2}), emb, {1, 2}, p);
  // host 0, class 1: |(.3,.4)| - |(-.7,.4)| ; host 1, class 2: |(-.1,.9)| - |(.9,.9)|
  const double expected = 0.5 - std::sqrt(0.49 + 0.16) + std::sqrt(0.01 + 0.81) - std::sqrt(0.81 + 0.81);
  EXPECT_NEAR(l.triplet.item(), expected, 1e-6);
  EXPECT_NEAR(l.detection.item(), 2.0 * std::log(2.0), 1e-12);
}

TEST(LossTest, NegativeReductionWithThreeClasses) {
  PrototypeSet p;
  p.vectors = {{0.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  const Tensor<D> emb({1, 2}, {0.2, 0.1});
  const double own = std::sqrt(0.04 + 0.01);
  const double a = std::sqrt(0.64 + 0.01), b = std::sqrt(0.04 + 0.81);
  const auto zero = Tensor<D>::zeros({1, 2});
  EXPECT_NEAR(fpe_losses(zero, emb, {1}, p, NegativeReduction::kSum).triplet.item(), own - a - b, 1e-12);
  EXPECT_NEAR(fpe_losses(zero, emb, {1}, p).triplet.item(), own - 0.5 * (a + b), 1e-12);
}

TEST(LossTest, LabelOutOfRangeThrows) {
  const auto p = corners(4);
  const Tensor<D> emb({1, 4}, std::vector<double>(4, 0.5));
  EXPECT_THROW(fpe_losses(Tensor<D>::zeros({1, 2}), emb, {4}, p), DataError);
  EXPECT_THROW(fpe_losses(Tensor<D>::zeros({1, 2}), emb, {-1}, p), DataError);
}

TEST(PrototypeTest, ConvexUpdates) {
  PrototypeSet p;
  p.vectors = {{0.9, 0.9}, {0.0, 0.0}, {1.0, 0.2}};
  const Tensor<D> emb({1, 2}, {0.4, 0.4});
  auto q = p;
  EXPECT_EQ(update_prototypes(emb, {1}, q, 1.0), 1u);
  EXPECT_EQ(q.vectors[1], (std::vector<double>{0.4, 0.4}));
  q = p;
  update_prototypes(emb, {1}, q, 0.0);
  EXPECT_EQ(q.vectors[1], p.vectors[1]);
  PrototypeSet mid;
  mid.vectors = {{0.0, 0.0}, {0.0, 0.0}, {5.0, 5.0}};
  update_prototypes(Tensor<D>({1, 2}, {1.0, 1.0}), {1}, mid, 0.5);
  EXPECT_EQ(mid.vectors[1], (std::vector<double>{0.5, 0.5}));
}

TEST(PrototypeTest, SkipsWhenNotNearest) {
  PrototypeSet p;
  p.vectors = {{0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}};
  const auto before = p.vectors;
  EXPECT_EQ(update_prototypes(Tensor<D>({1, 2}, {0.9, 0.9}), {1}, p, 0.5), 0u);
  EXPECT_EQ(update_prototypes(Tensor<D>({1, 2}, {0.9, 0.9}), {0}, p, 0.5), 0u);
  EXPECT_EQ(p.vectors, before);
}

TEST(PrototypeTest, StepSizeDecay) {
  PrototypeSet p;
  p.alpha = 0.9;
  p.epsilon = 0.05;
  for (int i = 0; i < 10; ++i) p.decay();
  EXPECT_NEAR(p.alpha, 0.9 * std::pow(0.95, 10), 1e-12);
  EXPECT_NEAR(p.alpha, 0.5388, 1e-4);
}

TEST(PrototypeTest, ContainmentUnderRandomUpdates) {
  std::mt19937_64 rng(15);
  auto p = PrototypeSet::random(3, 4, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, 3);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> e(4);
    for (auto& x : e) x = u(rng);
    update_prototypes(Tensor<D>({1, 4}, e), {lab(rng)}, p, u(rng));
  }
  for (const auto& v : p.vectors)
    for (double x : v) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
}

// The full detection + triplet loss against central differences at toy size.
TEST(FpeGradientTest, FullLossMatchesFiniteDifferences) {
  auto model = FpeModel<D>::create(toy_config(), 21);
  std::mt19937_64 rng(22);
  const std::size_t m = 3;
  const auto w = random_window(2, m, 4, rng);
  const auto g = schedule_graph(Schedule::from_placements(m, {1, 2, 3}, {0, -1, 2}, {1, 1, 2}), 12.0);
  auto protos = PrototypeSet::random(3, 4, rng);
  const std::vector<int> labels = {2, 0, 3};
  const auto x = flatten_window<D>(w);
  const auto carry = Tensor<D>::full({m, 16}, 0.1);
  auto loss = [&] {
    const auto out = fpe_forward(model, x, g, carry);
    return fpe_losses(out.logits, out.embeddings, labels, protos).total();
  };
  const auto report = grad_check<D>(loss, model.store, 1e-3);
  EXPECT_TRUE(report.passed()) << report.worst_parameter << "[" << report.worst_index << "] "
                               << report.worst_analytic << " vs " << report.worst_numeric;
  EXPECT_EQ(report.checked, model.store.total_values());
}

std::vector<FpeSample> separable_dataset(std::size_t count, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(1, 3);
  std::vector<FpeSample> data;
  for (std::size_t t = 0; t < count; ++t) {
    FpeSample s;
    s.window.k = 2;
    s.window.m = m;
    s.window.n = 4;
    s.labels.assign(m, 0);
    for (std::size_t i = 0; i < m; ++i)
      if (u(rng) < 0.3) s.labels[i] = cls(rng);
    s.window.data.assign(2 * m * 4, 0.0f);
    for (std::size_t step = 0; step < 2; ++step)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t f = 0; f < 4; ++f) {
          double v = 0.15 * u(rng);
          if (s.labels[i] > 0 && f == static_cast<std::size_t>(s.labels[i])) v += 0.8;
          s.window.data[(step * m + i) * 4 + f] = static_cast<float>(v);
        }
    s.graph = idle_graph(m);
    data.push_back(std::move(s));
  }
  return data;
}

TEST(TrainFpeTest, LearnsSeparableClasses) {
  const auto data = separable_dataset(500, 4, 31);
  auto model = FpeModel<float>::create(toy_config(), 32);
  PrototypeSet protos;
  FpeTrainConfig tc;
  tc.max_epochs = 40;
  tc.seed = 33;
  std::vector<FpeSample> train(data.begin(), data.begin() + 400);
  const auto report = train_fpe(model, protos, train, tc);
  EXPECT_GE(report.epochs, 1u);
  const auto pred = predict_sequence(model, protos, data, 400);
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0, faulty = 0;
  for (std::size_t t = 0; t < pred.size(); ++t)
    for (std::size_t i = 0; i < 4; ++i) {
      const int y = data[400 + t].labels[i];
      const bool d = pred[t][i].detected;
      tp += d && y > 0;
      fp += d && y == 0;
      fn += !d && y > 0;
      if (y > 0) {
        ++faulty;
        correct += pred[t][i].predicted_class == y;
      }
    }
  const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  EXPECT_GE(f1, 0.9);
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(faulty), 0.9);
}

TEST(TrainFpeTest, NoFaultsMeansNoPrototypeUpdates) {
  auto data = separable_dataset(60, 3, 41);
  for (auto& s : data) s.labels.assign(3, 0);
  auto model = FpeModel<float>::create(toy_config(), 42);
  PrototypeSet protos;
  FpeTrainConfig tc;
  tc.max_epochs = 3;
  tc.seed = 43;
  std::mt19937_64 rng(43);
  const auto initial = PrototypeSet::random(3, 4, rng);
  const auto report = train_fpe(model, protos, data, tc);
  EXPECT_EQ(report.prototype_updates, 0u);
  EXPECT_EQ(protos.vectors, initial.vectors);
  const auto out = fpe_forward(model, flatten_window<float>(data[0].window), data[0].graph,
                               Tensor<float>::zeros({3, 16}));
  EXPECT_EQ(fpe_losses(out.logits, out.embeddings, data[0].labels, protos).triplet.item(), 0.0f);
}

TEST(TrainFpeTest, EmptyDatasetThrows) {
  auto model = FpeModel<float>::create(toy_config(), 1);
  PrototypeSet protos;
  EXPECT_THROW(train_fpe(model, protos, {}, FpeTrainConfig{}), DataError);
}

}  // namespace
}  // namespace pregan
