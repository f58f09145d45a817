#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "pregan/tensor.hpp"

namespace pregan {

// A trainable tensor plus its AdamW moments.
template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> tensor;
  std::vector<Real> m;
  std::vector<Real> v;
  std::int64_t step_count = 0;
};

// Ordered, name-unique collection of parameters. Copying deep-copies every
// tensor so copies never share graph nodes.
template <class Real>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other) { copy_from(other); }
  ParameterStore& operator=(const ParameterStore& other) {
    if (this != &other) copy_from(other);
    return *this;
  }
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  std::size_t add(const std::string& name, Tensor<Real> init) {
    if (index_.count(name)) throw UsageError("duplicate parameter name: " + name);
    Parameter<Real> p;
    p.name = name;
    p.tensor = Tensor<Real>(init.shape(), std::vector<Real>(init.values().begin(), init.values().end()),
                            true);
    p.m.assign(p.tensor.numel(), Real(0));
    p.v.assign(p.tensor.numel(), Real(0));
    index_[name] = entries_.size();
    entries_.push_back(std::move(p));
    return entries_.size() - 1;
  }

  const Tensor<Real>& tensor(std::size_t i) const { return entries_[i].tensor; }
  Tensor<Real>& tensor(std::size_t i) { return entries_[i].tensor; }

  Parameter<Real>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }
  const Parameter<Real>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  std::vector<Parameter<Real>>& entries() { return entries_; }
  const std::vector<Parameter<Real>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grad() {
    for (auto& p : entries_) p.tensor.zero_grad();
  }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& p : entries_) n += p.tensor.numel();
    return n;
  }

 private:
  void copy_from(const ParameterStore& other) {
    entries_.clear();
    index_ = other.index_;
    for (const auto& p : other.entries_) {
      Parameter<Real> c = p;
      c.tensor = p.tensor.deep_copy();
      entries_.push_back(std::move(c));
    }
  }

  std::vector<Parameter<Real>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

// Decoupled weight decay, then the bias-corrected Adam update. Parameters
// without a gradient buffer are treated as having a zero gradient.
template <class Real>
void adamw_step(std::vector<Parameter<Real>*> params, const AdamWConfig& cfg) {
  for (Parameter<Real>* p : params) {
    auto values = p->tensor.mutable_values();
    const bool has_grad = p->tensor.has_grad();
    const auto grad = p->tensor.grad();
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? double(grad[i]) : 0.0;
      double w = values[i];
      w -= cfg.lr * cfg.weight_decay * w;
      const double m = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * g * g;
      p->m[i] = static_cast<Real>(m);
      p->v[i] = static_cast<Real>(v);
      w -= cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
      values[i] = static_cast<Real>(w);
    }
  }
}

template <class Real>
void adamw_step(ParameterStore<Real>& store, const AdamWConfig& cfg) {
  std::vector<Parameter<Real>*> ptrs;
  for (auto& p : store.entries()) ptrs.push_back(&p);
  adamw_step(ptrs, cfg);
}

// Uniform Glorot initialization.
template <class Real>
Tensor<Real> glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng,
                    double gain = 1.0) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<Real> v(fan_in * fan_out);
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return Tensor<Real>({fan_in, fan_out}, std::move(v));
}

// Two-layer perceptron with a tanh hidden layer, applied row-wise.
template <class Real>
struct FeedForward {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;

  static FeedForward create(ParameterStore<Real>& store, const std::string& prefix,
                            std::size_t in, std::size_t hidden, std::size_t out,
                            std::mt19937_64& rng) {
    FeedForward ff;
    ff.w1 = store.add(prefix + ".w1", glorot<Real>(in, hidden, rng));
    ff.b1 = store.add(prefix + ".b1", Tensor<Real>::zeros({1, hidden}));
    ff.w2 = store.add(prefix + ".w2", glorot<Real>(hidden, out, rng));
    ff.b2 = store.add(prefix + ".b2", Tensor<Real>::zeros({1, out}));
    return ff;
  }

  Tensor<Real> operator()(const ParameterStore<Real>& s, const Tensor<Real>& x) const {
    const Tensor<Real> h = tanh(linear(x, s.tensor(w1), s.tensor(b1)));
    return linear(h, s.tensor(w2), s.tensor(b2));
  }
};

}  // namespace pregan
