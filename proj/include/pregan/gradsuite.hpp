#pragma once

// Finite-difference sweep over every differentiable op and the full encoder
// loss, in double precision at toy sizes.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pregan/fpe.hpp"
#include "pregan/gan.hpp"
#include "pregan/gradcheck.hpp"

namespace pregan {

struct GradCase {
  std::string name;
  GradCheckReport report;
};

namespace detail {

using GradParams = std::vector<std::pair<std::string, Tensor<double>>>;

inline Tensor<double> random_leaf(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return Tensor<double>({r, c}, std::move(v), true);
}

// Contracts an op output with fixed random weights so every output entry
// contributes a distinct slope.
class Projector {
 public:
  explicit Projector(std::uint64_t seed) : seed_(seed) {}
  Tensor<double> operator()(const Tensor<double>& y) const {
    std::mt19937_64 rng(seed_);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> w(y.numel());
    for (auto& x : w) x = u(rng);
    return sum(mul(y, Tensor<double>(y.shape(), std::move(w))));
  }

 private:
  std::uint64_t seed_;
};

}  // namespace detail

inline std::vector<GradCase> gradient_suite(double tolerance = 1e-3, std::uint64_t seed = 7) {
  using T = Tensor<double>;
  using detail::random_leaf;
  std::mt19937_64 rng(seed);
  const detail::Projector proj(seed + 1);
  std::vector<GradCase> out;
  auto run = [&](const std::string& name, const std::function<T()>& f, const detail::GradParams& params) {
    out.push_back({name, grad_check<double>(f, params, tolerance)});
  };
  auto unary = [&](const std::string& name, const std::function<T(const T&)>& op, double lo = -1.0,
                   double hi = 1.0) {
    const T a = random_leaf(3, 4, rng, lo, hi);
    run(name, [&, a] { return proj(op(a)); }, {{"a", a}});
  };

  {
    const T a = random_leaf(3, 4, rng);
    const T same = random_leaf(3, 4, rng), row = random_leaf(1, 4, rng), col = random_leaf(3, 1, rng),
            one = random_leaf(1, 1, rng);
    for (const auto& [tag, b] : std::vector<std::pair<std::string, T>>{
             {"same", same}, {"row", row}, {"col", col}, {"scalar", one}}) {
      run("add/" + tag, [&, b] { return proj(add(a, b)); }, {{"a", a}, {"b", b}});
      run("sub/" + tag, [&, b] { return proj(sub(a, b)); }, {{"a", a}, {"b", b}});
      run("mul/" + tag, [&, b] { return proj(mul(a, b)); }, {{"a", a}, {"b", b}});
    }
  }
  unary("scale", [](const T& a) { return scale(a, -1.7); });
  unary("add_scalar", [](const T& a) { return add_scalar(a, 0.3); });
  unary("neg", [](const T& a) { return neg(a); });
  unary("sigmoid", [](const T& a) { return sigmoid(a); }, -3.0, 3.0);
  unary("tanh", [](const T& a) { return tanh(a); }, -2.0, 2.0);
  // Inputs stay clear of the kink at 0.
  unary("relu", [](const T& a) { return relu(a); }, 0.05, 1.0);
  unary("relu/negative", [](const T& a) { return relu(a); }, -1.0, -0.05);
  unary("exp", [](const T& a) { return exp(a); });
  unary("log", [](const T& a) { return log(a); }, 0.5, 2.0);
  unary("square", [](const T& a) { return square(a); });
  unary("transpose", [](const T& a) { return transpose(a); });
  unary("sum", [](const T& a) { return scale(sum(a), 1.3); });
  unary("mean", [](const T& a) { return scale(mean(a), 1.3); });
  unary("sum_axis/0", [](const T& a) { return sum_axis(a, 0); });
  unary("sum_axis/1", [](const T& a) { return sum_axis(a, 1); });
  unary("mean_axis/0", [](const T& a) { return mean_axis(a, 0); });
  unary("mean_axis/1", [](const T& a) { return mean_axis(a, 1); });
  unary("row_max", [](const T& a) { return row_max(a); });
  unary("row_l2_norm", [](const T& a) { return row_l2_norm(a); });
  unary("softmax", [](const T& a) { return softmax(a); }, -2.0, 2.0);
  unary("log_softmax", [](const T& a) { return log_softmax(a); }, -2.0, 2.0);
  unary("normalize_rows", [](const T& a) { return normalize_rows(a); });
  unary("slice/0", [](const T& a) { return slice(a, 0, 1, 3); });
  unary("slice/1", [](const T& a) { return slice(a, 1, 1, 3); });
  {
    const T a = random_leaf(3, 4, rng), b = random_leaf(4, 2, rng);
    run("matmul", [&] { return proj(matmul(a, b)); }, {{"a", a}, {"b", b}});
  }
  {
    const T a = random_leaf(2, 3, rng), b = random_leaf(1, 3, rng), c = random_leaf(2, 2, rng);
    run("concat/0", [&] { return proj(concat<double>({a, b}, 0)); }, {{"a", a}, {"b", b}});
    run("concat/1", [&] { return proj(concat<double>({a, c}, 1)); }, {{"a", a}, {"c", c}});
  }
  {
    const T x = random_leaf(3, 4, rng), g = random_leaf(1, 4, rng), b = random_leaf(1, 4, rng);
    run("layer_norm", [&] { return proj(layer_norm(x, g, b)); }, {{"x", x}, {"gamma", g}, {"beta", b}});
  }
  {
    const T x = random_leaf(3, 4, rng), w = random_leaf(4, 2, rng), b = random_leaf(1, 2, rng);
    run("linear", [&] { return proj(linear(x, w, b)); }, {{"x", x}, {"w", w}, {"b", b}});
  }
  {
    const T q = random_leaf(3, 2, rng), k = random_leaf(4, 2, rng), v = random_leaf(4, 3, rng);
    T mask = T::zeros({3, 4});
    mask.mutable_values()[1] = -1e9;
    run("attention", [&] { return proj(scaled_dot_attention(q, k, v).output); }, {{"q", q}, {"k", k}, {"v", v}});
    run("attention/masked", [&, mask] { return proj(scaled_dot_attention(q, k, v, &mask).output); },
        {{"q", q}, {"k", k}, {"v", v}});
  }
  {
    const T x = random_leaf(2, 3, rng), h = random_leaf(2, 2, rng);
    GruParams<double> p{random_leaf(5, 2, rng), random_leaf(1, 2, rng), random_leaf(5, 2, rng),
                        random_leaf(1, 2, rng),  random_leaf(5, 2, rng), random_leaf(1, 2, rng)};
    run("gru_cell", [&, p] { return proj(gru_cell(x, h, p)); },
        {{"x", x}, {"h", h}, {"w_z", p.w_z}, {"b_z", p.b_z}, {"w_r", p.w_r}, {"b_r", p.b_r}, {"w_n", p.w_n},
         {"b_n", p.b_n}});
  }
  {
    FpeConfig cfg;
    cfg.k = 2;
    cfg.n = 4;
    cfg.embed = 4;
    auto model = FpeModel<double>::create(cfg, seed + 2);
    const std::size_t m = 3;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> xv(m * cfg.k * cfg.n);
    for (auto& v : xv) v = u(rng);
    const T x({m, cfg.k * cfg.n}, xv);
    const auto graph = schedule_graph(Schedule::from_placements(m, {1, 2, 3}, {0, -1, 2}, {1, 1, 2}), 12.0);
    auto protos = PrototypeSet::random(cfg.c, cfg.embed, rng);
    const std::vector<int> labels = {2, 0, 3};
    const T carry = T::full({m, cfg.hidden}, 0.1);
    auto loss = [&] {
      const auto o = fpe_forward(model, x, graph, carry);
      return fpe_losses(o.logits, o.embeddings, labels, protos).total();
    };
    out.push_back({"fpe_loss", grad_check<double>(loss, model.store, tolerance)});
  }
  {
    GanConfig cfg;
    cfg.embed = 2;
    cfg.disc_hidden = 4;
    auto gan = GanModel<double>::create(cfg, seed + 3);
    const std::size_t p = 3, m = 3;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GanInput<double> in;
    in.incumbent = {0, 2, 1};
    std::vector<double> s(p * m, 0.0);
    for (std::size_t r = 0; r < p; ++r) s[r * m + static_cast<std::size_t>(in.incumbent[r])] = 1.0;
    in.schedule = T({p, m}, s);
    auto fill = [&](std::size_t r, std::size_t c) {
      std::vector<double> v(r * c);
      for (auto& x : v) x = u(rng);
      return T({r, c}, v);
    };
    in.hosts = fill(m, cfg.host_width());
    in.tasks = fill(p, kTaskFeatures);
    in.base_load = fill(m, 1);
    const T delta({p, m}, {0.9, -0.8, 0.3, -0.2, 0.1, 0.95, 0.0, 0.4, -0.6});
    auto loss = [&] { return discriminator_loss(discriminate(gan, in, delta), true, m); };
    out.push_back({"discriminator_loss", grad_check<double>(loss, gan.discriminator, tolerance)});
  }
  return out;
}

}  // namespace pregan
