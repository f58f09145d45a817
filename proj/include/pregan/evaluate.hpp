#pragma once

// Held-out scoring of the encoder.

#include <limits>
#include <vector>

#include "pregan/fpe.hpp"
#include "pregan/metrics.hpp"

namespace pregan {

struct FpeEvaluation {
  DetectionReport interval;  // interval faulty when any host is
  DetectionReport host;
  double class_accuracy = 0.0;  // nearest prototype vs label, over truly faulty hosts
  std::size_t faulty_hosts = 0;
  DiagnosisReport diagnosis;
};

inline FpeEvaluation evaluate_predictions(const std::vector<std::vector<HostPrediction>>& pred,
                                          const std::vector<std::vector<int>>& labels) {
  if (pred.size() != labels.size()) throw DataError("prediction and label interval counts differ");
  std::vector<bool> pi, ti, ph, th;
  std::vector<std::vector<double>> scores;
  std::size_t correct = 0;
  FpeEvaluation ev;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred[t].size() != labels[t].size()) throw DataError("prediction and label host counts differ");
    bool any_pred = false;
    std::vector<double> s;
    for (std::size_t i = 0; i < pred[t].size(); ++i) {
      const int y = labels[t][i];
      any_pred = any_pred || pred[t][i].detected;
      ph.push_back(pred[t][i].detected);
      th.push_back(y > 0);
      s.push_back(pred[t][i].score1);
      if (y > 0) {
        ++ev.faulty_hosts;
        correct += pred[t][i].predicted_class == y;
      }
    }
    pi.push_back(any_pred);
    ti.push_back(any_fault(labels[t]));
    scores.push_back(std::move(s));
  }
  ev.interval = detection_metrics(pi, ti);
  ev.host = detection_metrics(ph, th);
  if (ev.faulty_hosts > 0) ev.class_accuracy = static_cast<double>(correct) / static_cast<double>(ev.faulty_hosts);
  ev.diagnosis.hitrate_100 = hitrate_at_100(scores, labels);
  ev.diagnosis.ndcg_100 = ndcg_at_100(scores, labels);
  return ev;
}

struct PrototypeGeometry {
  // Per class 1..c (index 0 unused): mean distance from embeddings of that
  // class to their own prototype and to the other prototypes.
  std::vector<double> own;
  std::vector<double> other;
  std::vector<std::size_t> count;

  bool separated() const {
    for (std::size_t j = 1; j < own.size(); ++j)
      if (count[j] == 0 || !(own[j] < other[j])) return false;
    return own.size() > 1;
  }
};

template <class Real>
PrototypeGeometry prototype_geometry(const FpeModel<Real>& model, const PrototypeSet& protos,
                                     const std::vector<FpeSample>& data, std::size_t begin = 0,
                                     std::size_t end = std::numeric_limits<std::size_t>::max()) {
  end = std::min(end, data.size());
  const std::size_t c = protos.classes();
  PrototypeGeometry g;
  g.own.assign(c + 1, 0.0);
  g.other.assign(c + 1, 0.0);
  g.count.assign(c + 1, 0);
  std::vector<std::size_t> other_n(c + 1, 0);
  std::optional<Tensor<Real>> carry;
  for (std::size_t t = begin; t < end; ++t) {
    const auto& s = data[t];
    if (!carry || carry->rows() != s.window.m) carry = zero_carry(model, s.window.m);
    const auto f = fpe_forward(model, flatten_window<Real>(s.window), s.graph, *carry);
    carry = next_carry(f);
    for (std::size_t i = 0; i < s.window.m; ++i) {
      const int y = s.labels[i];
      if (y <= 0) continue;
      const auto e = row_values(f.embeddings, i);
      const auto yj = static_cast<std::size_t>(y);
      g.own[yj] += euclidean(e, protos.vectors[yj]);
      ++g.count[yj];
      for (std::size_t j = 1; j <= c; ++j) {
        if (j == yj) continue;
        g.other[yj] += euclidean(e, protos.vectors[j]);
        ++other_n[yj];
      }
    }
  }
  for (std::size_t j = 1; j <= c; ++j) {
    if (g.count[j] > 0) g.own[j] /= static_cast<double>(g.count[j]);
    if (other_n[j] > 0) g.other[j] /= static_cast<double>(other_n[j]);
  }
  return g;
}

}  // namespace pregan
