#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "pregan/errors.hpp"
#include "pregan/sim.hpp"

namespace pregan {

struct DetectionReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct DiagnosisReport {
  std::optional<double> hitrate_100;
  std::optional<double> ndcg_100;
};

// Zero denominators give 0.
inline DetectionReport detection_metrics(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
  if (predicted.size() != truth.size()) throw DataError("prediction and truth lengths differ");
  if (predicted.empty()) throw DataError("detection metrics need at least one interval");
  DetectionReport r;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] && truth[i]) ++r.tp;
    else if (predicted[i]) ++r.fp;
    else if (truth[i]) ++r.fn;
    else ++r.tn;
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  r.accuracy = ratio(r.tp + r.tn, predicted.size());
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

// An interval is faulty when any host is.
inline bool any_fault(const std::vector<int>& labels) {
  return std::any_of(labels.begin(), labels.end(), [](int l) { return l > 0; });
}

namespace detail {

// Host indices by descending score; equal scores keep index order.
inline std::vector<std::size_t> rank_hosts(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline void check_diagnosis_input(const std::vector<std::vector<double>>& scores,
                                  const std::vector<std::vector<int>>& labels) {
  if (scores.size() != labels.size()) throw DataError("score and label interval counts differ");
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (scores[t].size() != labels[t].size()) throw DataError("score and label host counts differ");
  }
}

}  // namespace detail

// Per faulty interval: share of faulty hosts found among the top-|GT| scores.
inline std::optional<double> hitrate_at_100(const std::vector<std::vector<double>>& scores,
                                            const std::vector<std::vector<int>>& labels) {
  detail::check_diagnosis_input(scores, labels);
  double total = 0.0;
  std::size_t intervals = 0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const auto gt = static_cast<std::size_t>(std::count_if(labels[t].begin(), labels[t].end(), [](int l) { return l > 0; }));
    if (gt == 0) continue;
    const auto order = detail::rank_hosts(scores[t]);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < gt; ++r)
      if (labels[t][order[r]] > 0) ++hits;
    total += static_cast<double>(hits) / static_cast<double>(gt);
    ++intervals;
  }
  if (intervals == 0) return std::nullopt;
  return total / static_cast<double>(intervals);
}

// Binary-relevance NDCG truncated at |GT|, averaged over faulty intervals.
inline std::optional<double> ndcg_at_100(const std::vector<std::vector<double>>& scores,
                                         const std::vector<std::vector<int>>& labels) {
  detail::check_diagnosis_input(scores, labels);
  double total = 0.0;
  std::size_t intervals = 0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const auto gt = static_cast<std::size_t>(std::count_if(labels[t].begin(), labels[t].end(), [](int l) { return l > 0; }));
    if (gt == 0) continue;
    const auto order = detail::rank_hosts(scores[t]);
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t r = 0; r < gt; ++r) {
      const double discount = 1.0 / std::log2(static_cast<double>(r) + 2.0);
      if (labels[t][order[r]] > 0) dcg += discount;
      idcg += discount;
    }
    total += dcg / idcg;
    ++intervals;
  }
  if (intervals == 0) return std::nullopt;
  return total / static_cast<double>(intervals);
}

// One interval's preemptive-migration decision.
struct DecisionRecord {
  std::int64_t interval = 0;
  bool fault_predicted = false;
  // Discriminator output on the candidate (absent when no candidate was built).
  double d0 = 0.0;
  double d1 = 0.0;
  bool accepted = false;
  std::size_t migrations = 0;
};

// Fraction of candidate intervals where the discriminator preferred the
// candidate schedule.
inline std::optional<double> improvement_ratio(const std::vector<DecisionRecord>& records) {
  std::size_t candidates = 0, better = 0;
  for (const auto& r : records) {
    if (!r.fault_predicted) continue;
    ++candidates;
    if (r.d1 > r.d0) ++better;
  }
  if (candidates == 0) return std::nullopt;
  return static_cast<double>(better) / static_cast<double>(candidates);
}

inline double overhead_ratio(double model_time_s, double scheduler_time_s) {
  if (!(scheduler_time_s > 0.0)) throw ParameterError("scheduler time must be positive");
  if (model_time_s < 0.0) throw ParameterError("model time must be non-negative");
  return model_time_s / scheduler_time_s;
}

struct RunReport {
  std::size_t intervals = 0;
  double energy_kwh = 0.0;
  std::size_t completed = 0;
  double mean_response_time_s = 0.0;
  double slo_violation_fraction = 0.0;
  std::array<double, kAppClasses> slo_violation_fraction_by_app{};
  std::array<std::size_t, kAppClasses> completed_by_app{};
  std::size_t migration_count = 0;
  double migration_time_s = 0.0;
  double mean_cpu_utilization = 0.0;
  double mean_ram_utilization = 0.0;
  std::optional<double> improvement_ratio;
  std::optional<double> overhead_ratio;
};

inline RunReport qos_summary(const std::vector<IntervalRecord>& records, const std::vector<HostSpec>& hosts) {
  RunReport r;
  r.intervals = records.size();
  double energy_wh = 0.0, response = 0.0, cpu = 0.0, ram = 0.0;
  std::size_t violations = 0, samples = 0;
  std::array<std::size_t, kAppClasses> violations_by_app{};
  for (const auto& rec : records) {
    energy_wh += rec.energy_wh;
    r.migration_count += rec.migration_count;
    r.migration_time_s += rec.migration_time_s;
    for (const auto& c : rec.completed) {
      const auto a = static_cast<std::size_t>(c.app_class);
      ++r.completed;
      ++r.completed_by_app[a];
      response += c.response_time;
      if (c.slo_violated) {
        ++violations;
        ++violations_by_app[a];
      }
    }
    for (std::size_t h = 0; h < hosts.size() && h < rec.raw_features.size(); ++h) {
      cpu += rec.raw_features[h][kCpuUtil] / hosts[h].cpu_capacity;
      ram += rec.raw_features[h][kRamUtil] / hosts[h].ram_capacity;
      ++samples;
    }
  }
  r.energy_kwh = energy_wh / 1000.0;
  if (r.completed > 0) {
    r.mean_response_time_s = response / static_cast<double>(r.completed);
    r.slo_violation_fraction = static_cast<double>(violations) / static_cast<double>(r.completed);
  }
  for (std::size_t a = 0; a < kAppClasses; ++a) {
    if (r.completed_by_app[a] > 0) {
      r.slo_violation_fraction_by_app[a] =
          static_cast<double>(violations_by_app[a]) / static_cast<double>(r.completed_by_app[a]);
    }
  }
  if (samples > 0) {
    r.mean_cpu_utilization = cpu / static_cast<double>(samples);
    r.mean_ram_utilization = ram / static_cast<double>(samples);
  }
  return r;
}

}  // namespace pregan
