#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pregan/nn.hpp"

namespace pregan {

struct GradCheckOptions {
  double step = 1e-3;
  // Denominator floor so entries whose true derivative is ~0 are judged on
  // absolute error instead of amplified noise.
  double floor = 1e-4;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares the analytic gradient of `loss_fn` with central differences for
// every entry of every named tensor. `loss_fn` must rebuild the graph from the
// current tensor values on each call.
template <class Real>
GradCheckReport grad_check(const std::function<Tensor<Real>()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor<Real>>>& params,
                           double tolerance, GradCheckOptions opts = {}) {
  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto [name, t] : params) t.zero_grad();
  backward(loss_fn());
  std::vector<std::vector<Real>> analytic;
  for (const auto& [name, t] : params) {
    analytic.emplace_back(t.grad().begin(), t.grad().end());
    if (analytic.back().size() != t.numel()) analytic.back().assign(t.numel(), Real(0));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<Real> t = params[k].second;
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real orig = values[i];
      values[i] = static_cast<Real>(orig + opts.step);
      const double up = loss_fn().item();
      values[i] = static_cast<Real>(orig - opts.step);
      const double down = loss_fn().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double err = relative_error(analytic[k][i], numeric, opts.floor);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_parameter = params[k].first;
        report.worst_index = i;
        report.worst_analytic = analytic[k][i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

template <class Real>
GradCheckReport grad_check(const std::function<Tensor<Real>()>& loss_fn,
                           ParameterStore<Real>& store, double tolerance,
                           GradCheckOptions opts = {}) {
  std::vector<std::pair<std::string, Tensor<Real>>> params;
  for (auto& p : store.entries()) params.emplace_back(p.name, p.tensor);
  return grad_check<Real>(loss_fn, params, tolerance, opts);
}

}  // namespace pregan
