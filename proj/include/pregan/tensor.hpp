#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node. Operations build new nodes that
// remember their parents and a backward rule; backward() walks the graph in
// reverse topological order. Values use `Real` (float in production, double
// for gradient checking); reductions accumulate in double.
//
// All operators work on rank <= 2 tensors. A rank-1 tensor of length n is
// treated as a 1 x n row.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace pregan {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <class Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  TensorNode() = default;
  TensorNode(const TensorNode&) = delete;
  TensorNode& operator=(const TensorNode&) = delete;

  // Long chains (a generator pass over hundreds of tasks) would overflow the
  // stack if released recursively. Nodes owned only by this chain are
  // unlinked one at a time instead. Backward closures hold copies of the
  // parent pointers, so they are dropped before the parents are unlinked.
  ~TensorNode() {
    backward_fn = nullptr;
    std::vector<std::shared_ptr<TensorNode>> pending = std::move(parents);
    while (!pending.empty()) {
      std::shared_ptr<TensorNode> n = std::move(pending.back());
      pending.pop_back();
      if (n.use_count() == 1) {
        n->backward_fn = nullptr;
        for (auto& p : n->parents) pending.push_back(std::move(p));
        n->parents.clear();
      }
    }
  }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
  }
};

template <class Real = float>
class Tensor {
 public:
  using Node = TensorNode<Real>;

  Tensor() : node_(std::make_shared<Node>()) { node_->shape = {0}; }

  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor values length " + std::to_string(values.size()) +
                       " does not match shape " + shape_string(shape));
    }
    if (shape.size() > 2) throw ShapeError("tensors are limited to rank 2");
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<Real>(n, Real(0)), requires_grad);
  }

  static Tensor full(Shape shape, Real v) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<Real>(n, v));
  }

  static Tensor scalar(Real v) { return Tensor({1, 1}, {v}); }

  static Tensor from_node(std::shared_ptr<Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rows() const {
    return rank() == 2 ? node_->shape[0] : 1;
  }
  std::size_t cols() const {
    return rank() == 2 ? node_->shape[1] : (rank() == 1 ? node_->shape[0] : 1);
  }

  std::span<const Real> values() const { return node_->value; }
  std::span<Real> mutable_values() { return node_->value; }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  Real item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }
  Real at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }

  // Leaf copy sharing no graph history; gradients stop here.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  Tensor deep_copy() const { return Tensor(shape(), node_->value, requires_grad()); }

  void zero_grad() { node_->grad.assign(node_->value.size(), Real(0)); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <class Real>
using NodePtr = std::shared_ptr<TensorNode<Real>>;

template <class Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> value,
                         std::vector<NodePtr<Real>> parents,
                         std::function<void(TensorNode<Real>&)> fn) {
  auto node = std::make_shared<TensorNode<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const auto& p) { return p->requires_grad; });
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Tensor<Real>::from_node(std::move(node));
}

inline Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

// Index map for a broadcast right-hand operand: same shape, row vector,
// column vector, or scalar.
enum class Broadcast { kSame, kRow, kCol, kScalar };

template <class Real>
Broadcast broadcast_kind(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.numel() == b.numel() && a.rows() == b.rows() && a.cols() == b.cols()) {
    return Broadcast::kSame;
  }
  if (b.numel() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) +
                   " onto " + shape_string(a.shape()));
}

inline std::size_t broadcast_index(Broadcast kind, std::size_t r, std::size_t c,
                                   std::size_t cols) {
  switch (kind) {
    case Broadcast::kSame: return r * cols + c;
    case Broadcast::kRow: return c;
    case Broadcast::kCol: return r;
    case Broadcast::kScalar: return 0;
  }
  return 0;
}

template <class Real, class Fwd, class DA, class DB>
Tensor<Real> binary_op(const Tensor<Real>& a, const Tensor<Real>& b, const char* name,
                       Fwd fwd, DA da, DB db) {
  const Broadcast kind = broadcast_kind(a, b, name);
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<Real> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      out[i] = fwd(av[i], bv[broadcast_index(kind, r, c, cols)]);
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result<Real>(a.shape(), std::move(out), {an, bn},
                           [an, bn, kind, rows, cols, da, db](TensorNode<Real>& self) {
                             if (an->requires_grad) an->ensure_grad();
                             if (bn->requires_grad) bn->ensure_grad();
                             for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < cols; ++c) {
                                 const std::size_t i = r * cols + c;
                                 const std::size_t j = broadcast_index(kind, r, c, cols);
                                 const Real g = self.grad[i];
                                 if (an->requires_grad) an->grad[i] += g * da(an->value[i], bn->value[j]);
                                 if (bn->requires_grad) bn->grad[j] += g * db(an->value[i], bn->value[j]);
                               }
                             }
                           });
}

template <class Real, class Fwd, class Deriv>
Tensor<Real> unary_op(const Tensor<Real>& a, Fwd fwd, Deriv deriv) {
  std::vector<Real> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  auto an = a.node();
  return make_result<Real>(a.shape(), std::move(out), {an}, [an, deriv](TensorNode<Real>& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      an->grad[i] += self.grad[i] * deriv(an->value[i], self.value[i]);
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      a, b, "add", [](Real x, Real y) { return x + y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(1); });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(-1); });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op<Real>(
      a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real, Real y) { return y; },
      [](Real x, Real) { return x; });
}

template <class Real>
Tensor<Real> operator+(const Tensor<Real>& a, const Tensor<Real>& b) { return add(a, b); }
template <class Real>
Tensor<Real> operator-(const Tensor<Real>& a, const Tensor<Real>& b) { return sub(a, b); }
template <class Real>
Tensor<Real> operator*(const Tensor<Real>& a, const Tensor<Real>& b) { return mul(a, b); }

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, double s) {
  const Real sr = static_cast<Real>(s);
  return detail::unary_op<Real>(a, [sr](Real x) { return x * sr; },
                                [sr](Real, Real) { return sr; });
}

template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, double s) {
  const Real sr = static_cast<Real>(s);
  return detail::unary_op<Real>(a, [sr](Real x) { return x + sr; },
                                [](Real, Real) { return Real(1); });
}

template <class Real>
Tensor<Real> neg(const Tensor<Real>& a) { return scale(a, -1.0); }

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <class Real>
Real sigmoid_value(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
  return detail::unary_op<Real>(a, [](Real x) { return sigmoid_value(x); },
                                [](Real, Real y) { return y * (Real(1) - y); });
}

template <class Real>
Tensor<Real> tanh(const Tensor<Real>& a) {
  return detail::unary_op<Real>(a, [](Real x) { return std::tanh(x); },
                                [](Real, Real y) { return Real(1) - y * y; });
}

template <class Real>
Tensor<Real> relu(const Tensor<Real>& a) {
  return detail::unary_op<Real>(a, [](Real x) { return x > 0 ? x : Real(0); },
                                [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

template <class Real>
Tensor<Real> exp(const Tensor<Real>& a) {
  return detail::unary_op<Real>(a, [](Real x) { return std::exp(x); },
                                [](Real, Real y) { return y; });
}

template <class Real>
Tensor<Real> log(const Tensor<Real>& a) {
  return detail::unary_op<Real>(a, [](Real x) { return std::log(x); },
                                [](Real x, Real) { return Real(1) / x; });
}

template <class Real>
Tensor<Real> square(const Tensor<Real>& a) {
  return detail::unary_op<Real>(a, [](Real x) { return x * x; },
                                [](Real x, Real) { return Real(2) * x; });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<Real> out(n * m);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> acc(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const Real* brow = bv.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) acc[j] += x * brow[j];
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = static_cast<Real>(acc[j]);
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<Real>(
      detail::matrix_shape(n, m), std::move(out), {an, bn},
      [an, bn, n, k, m](TensorNode<Real>& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
          an->ensure_grad();
          // dA = G B^T
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < m; ++j) s += double(g[i * m + j]) * bn->value[p * m + j];
              an->grad[i * k + p] += static_cast<Real>(s);
            }
          }
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          // dB = A^T G
          std::vector<double> acc(k * m, 0.0);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double x = an->value[i * k + p];
              if (x == 0.0) continue;
              for (std::size_t j = 0; j < m; ++j) acc[p * m + j] += x * g[i * m + j];
            }
          }
          for (std::size_t i = 0; i < k * m; ++i) bn->grad[i] += static_cast<Real>(acc[i]);
        }
      });
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<Real> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  auto an = a.node();
  return detail::make_result<Real>(detail::matrix_shape(c, r), std::move(out), {an},
                                   [an, r, c](TensorNode<Real>& self) {
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < r; ++i)
                                       for (std::size_t j = 0; j < c; ++j)
                                         an->grad[i * c + j] += self.grad[j * r + i];
                                   });
}

// Concatenate along axis 0 (stack rows) or axis 1 (join columns).
template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  std::vector<detail::NodePtr<Real>> nodes;
  std::size_t rows = parts[0].rows(), cols = parts[0].cols();
  if (axis == 0) {
    rows = 0;
    for (const auto& p : parts) {
      if (p.cols() != cols) throw ShapeError("concat axis 0: column mismatch");
      rows += p.rows();
    }
  } else {
    cols = 0;
    for (const auto& p : parts) {
      if (p.rows() != rows) throw ShapeError("concat axis 1: row mismatch");
      cols += p.cols();
    }
  }
  std::vector<Real> out(rows * cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    offsets.push_back(off);
    const auto pv = p.values();
    for (std::size_t r = 0; r < p.rows(); ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) {
        const std::size_t dst = axis == 0 ? (off + r) * cols + c : r * cols + off + c;
        out[dst] = pv[r * p.cols() + c];
      }
    off += axis == 0 ? p.rows() : p.cols();
  }
  auto parents = nodes;
  return detail::make_result<Real>(
      detail::matrix_shape(rows, cols), std::move(out), std::move(parents),
      [nodes, offsets, axis, cols](TensorNode<Real>& self) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          auto& pn = nodes[k];
          if (!pn->requires_grad) continue;
          pn->ensure_grad();
          const std::size_t pr = pn->shape.size() == 2 ? pn->shape[0] : 1;
          const std::size_t pc = pn->value.size() / std::max<std::size_t>(pr, 1);
          for (std::size_t r = 0; r < pr; ++r)
            for (std::size_t c = 0; c < pc; ++c) {
              const std::size_t src =
                  axis == 0 ? (offsets[k] + r) * cols + c : r * cols + offsets[k] + c;
              pn->grad[r * pc + c] += self.grad[src];
            }
        }
      });
}

// Half-open slice [begin, end) along an axis.
template <class Real>
Tensor<Real> slice(const Tensor<Real>& a, int axis, std::size_t begin, std::size_t end) {
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t lim = axis == 0 ? r : c;
  if (begin > end || end > lim) throw ShapeError("slice out of range");
  const std::size_t orows = axis == 0 ? end - begin : r;
  const std::size_t ocols = axis == 0 ? c : end - begin;
  std::vector<Real> out(orows * ocols);
  const auto av = a.values();
  for (std::size_t i = 0; i < orows; ++i)
    for (std::size_t j = 0; j < ocols; ++j) {
      const std::size_t src = axis == 0 ? (begin + i) * c + j : i * c + begin + j;
      out[i * ocols + j] = av[src];
    }
  auto an = a.node();
  return detail::make_result<Real>(detail::matrix_shape(orows, ocols), std::move(out), {an},
                                   [an, axis, begin, orows, ocols, c](TensorNode<Real>& self) {
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < orows; ++i)
                                       for (std::size_t j = 0; j < ocols; ++j) {
                                         const std::size_t src = axis == 0 ? (begin + i) * c + j
                                                                           : i * c + begin + j;
                                         an->grad[src] += self.grad[i * ocols + j];
                                       }
                                   });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  double s = 0.0;
  for (Real v : a.values()) s += v;
  auto an = a.node();
  return detail::make_result<Real>({1, 1}, {static_cast<Real>(s)}, {an},
                                   [an](TensorNode<Real>& self) {
                                     an->ensure_grad();
                                     for (auto& g : an->grad) g += self.grad[0];
                                   });
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// Reduce along an axis: axis 0 collapses rows (1 x cols), axis 1 collapses
// columns (rows x 1).
template <class Real>
Tensor<Real> sum_axis(const Tensor<Real>& a, int axis) {
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t n = axis == 0 ? c : r;
  std::vector<double> acc(n, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) acc[axis == 0 ? j : i] += av[i * c + j];
  std::vector<Real> out(acc.begin(), acc.end());
  auto an = a.node();
  Shape shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  return detail::make_result<Real>(std::move(shape), std::move(out), {an},
                                   [an, r, c, axis](TensorNode<Real>& self) {
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < r; ++i)
                                       for (std::size_t j = 0; j < c; ++j)
                                         an->grad[i * c + j] += self.grad[axis == 0 ? j : i];
                                   });
}

template <class Real>
Tensor<Real> mean_axis(const Tensor<Real>& a, int axis) {
  const std::size_t n = axis == 0 ? a.rows() : a.cols();
  if (n == 0) throw ShapeError("mean over empty axis");
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(n));
}

// Per-row maximum (rows x 1). The gradient goes to the first maximal entry.
template <class Real>
Tensor<Real> row_max(const Tensor<Real>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) throw ShapeError("row_max over empty axis");
  std::vector<Real> out(r);
  std::vector<std::size_t> arg(r);
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (av[i * c + j] > av[i * c + best]) best = j;
    arg[i] = best;
    out[i] = av[i * c + best];
  }
  auto an = a.node();
  return detail::make_result<Real>({r, 1}, std::move(out), {an},
                                   [an, arg, c](TensorNode<Real>& self) {
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < arg.size(); ++i)
                                       an->grad[i * c + arg[i]] += self.grad[i];
                                   });
}

// Euclidean norm of every row (rows x 1). Zero rows get a zero subgradient.
template <class Real>
Tensor<Real> row_l2_norm(const Tensor<Real>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<Real> out(r);
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += double(av[i * c + j]) * av[i * c + j];
    out[i] = static_cast<Real>(std::sqrt(s));
  }
  auto an = a.node();
  return detail::make_result<Real>({r, 1}, std::move(out), {an},
                                   [an, r, c](TensorNode<Real>& self) {
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < r; ++i) {
                                       const Real n = self.value[i];
                                       if (n == Real(0)) continue;
                                       for (std::size_t j = 0; j < c; ++j)
                                         an->grad[i * c + j] +=
                                             self.grad[i] * an->value[i * c + j] / n;
                                     }
                                   });
}

// ---------------------------------------------------------------------------
// Normalizations
// ---------------------------------------------------------------------------

// Softmax over the last axis with max subtraction.
template <class Real>
Tensor<Real> softmax(const Tensor<Real>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) throw ShapeError("softmax over empty axis");
  std::vector<Real> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    const Real* row = av.data() + i * c;
    const Real mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(double(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = static_cast<Real>(std::exp(double(row[j] - mx)) / z);
  }
  auto an = a.node();
  return detail::make_result<Real>(a.shape(), std::move(out), {an},
                                   [an, r, c](TensorNode<Real>& self) {
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < r; ++i) {
                                       double dot = 0.0;
                                       for (std::size_t j = 0; j < c; ++j)
                                         dot += double(self.grad[i * c + j]) * self.value[i * c + j];
                                       for (std::size_t j = 0; j < c; ++j) {
                                         const std::size_t k = i * c + j;
                                         an->grad[k] += static_cast<Real>(
                                             self.value[k] * (self.grad[k] - dot));
                                       }
                                     }
                                   });
}

template <class Real>
Tensor<Real> log_softmax(const Tensor<Real>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) throw ShapeError("log_softmax over empty axis");
  std::vector<Real> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    const Real* row = av.data() + i * c;
    const Real mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(double(row[j] - mx));
    const double lz = std::log(z) + mx;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = static_cast<Real>(row[j] - lz);
  }
  auto an = a.node();
  return detail::make_result<Real>(a.shape(), std::move(out), {an},
                                   [an, r, c](TensorNode<Real>& self) {
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < r; ++i) {
                                       double gs = 0.0;
                                       for (std::size_t j = 0; j < c; ++j) gs += self.grad[i * c + j];
                                       for (std::size_t j = 0; j < c; ++j) {
                                         const std::size_t k = i * c + j;
                                         an->grad[k] += static_cast<Real>(
                                             self.grad[k] - std::exp(double(self.value[k])) * gs);
                                       }
                                     }
                                   });
}

inline constexpr double kLayerNormEps = 1e-5;

// Zero-mean, unit-variance rows (no affine).
template <class Real>
Tensor<Real> normalize_rows(const Tensor<Real>& a, double eps = kLayerNormEps) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) throw ShapeError("layer_norm over empty axis");
  std::vector<Real> out(a.numel());
  std::vector<double> inv_std(r);
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += av[i * c + j];
    mu /= double(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = av[i * c + j] - mu;
      var += d * d;
    }
    var /= double(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = static_cast<Real>((av[i * c + j] - mu) * inv_std[i]);
  }
  auto an = a.node();
  return detail::make_result<Real>(a.shape(), std::move(out), {an},
                                   [an, r, c, inv_std](TensorNode<Real>& self) {
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < r; ++i) {
                                       double mg = 0.0, mgx = 0.0;
                                       for (std::size_t j = 0; j < c; ++j) {
                                         const std::size_t k = i * c + j;
                                         mg += self.grad[k];
                                         mgx += double(self.grad[k]) * self.value[k];
                                       }
                                       mg /= double(c);
                                       mgx /= double(c);
                                       for (std::size_t j = 0; j < c; ++j) {
                                         const std::size_t k = i * c + j;
                                         an->grad[k] += static_cast<Real>(
                                             inv_std[i] * (self.grad[k] - mg - self.value[k] * mgx));
                                       }
                                     }
                                   });
}

// Layer normalization over the last axis followed by a learned affine map.
// gamma and beta broadcast as row vectors or scalars.
template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                        const Tensor<Real>& beta, double eps = kLayerNormEps) {
  return add(mul(normalize_rows(x, eps), gamma), beta);
}

// ---------------------------------------------------------------------------
// Composite layers
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias) {
  return add(matmul(x, weight), bias);
}

template <class Real>
struct AttentionResult {
  Tensor<Real> output;
  Tensor<Real> weights;
};

// softmax(Q K^T / sqrt(d_k) + mask) V. The optional mask is additive with
// the shape of the score matrix.
template <class Real>
AttentionResult<Real> scaled_dot_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                                           const Tensor<Real>& v,
                                           const Tensor<Real>* mask = nullptr) {
  if (q.cols() != k.cols()) throw ShapeError("attention: query/key width mismatch");
  if (k.rows() != v.rows()) throw ShapeError("attention: key/value count mismatch");
  const double dk = static_cast<double>(q.cols());
  Tensor<Real> scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(dk));
  if (mask != nullptr) scores = add(scores, *mask);
  Tensor<Real> weights = softmax(scores);
  return {matmul(weights, v), weights};
}

template <class Real>
struct GruParams {
  Tensor<Real> w_z, b_z;  // (in + hidden) x hidden, 1 x hidden
  Tensor<Real> w_r, b_r;
  Tensor<Real> w_n, b_n;
};

// z = sigmoid([x;h] Wz + bz), r = sigmoid([x;h] Wr + br),
// n = tanh([x; r*h] Wn + bn), h' = (1 - z) * n + z * h. Rows are batch items.
template <class Real>
Tensor<Real> gru_cell(const Tensor<Real>& x, const Tensor<Real>& h, const GruParams<Real>& p) {
  if (x.rows() != h.rows()) throw ShapeError("gru_cell: batch mismatch");
  const Tensor<Real> xh = concat<Real>({x, h}, 1);
  const Tensor<Real> z = sigmoid(linear(xh, p.w_z, p.b_z));
  const Tensor<Real> r = sigmoid(linear(xh, p.w_r, p.b_r));
  const Tensor<Real> n = tanh(linear(concat<Real>({x, mul(r, h)}, 1), p.w_n, p.b_n));
  const Tensor<Real> one_minus_z = add_scalar(neg(z), 1.0);
  return add(mul(one_minus_z, n), mul(z, h));
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

// Accumulates d(loss)/d(leaf) into every reachable tensor that requires grad.
template <class Real>
void backward(const Tensor<Real>& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " +
                     shape_string(loss.shape()));
  }
  if (!loss.node()->requires_grad) return;

  std::vector<TensorNode<Real>*> order;
  std::unordered_set<TensorNode<Real>*> visited;
  std::vector<std::pair<TensorNode<Real>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode<Real>* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior nodes start from zero; leaves keep accumulating across calls.
  for (auto* node : order)
    if (node->backward_fn) node->grad.assign(node->value.size(), Real(0));
  loss.node()->ensure_grad();
  loss.node()->grad[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

}  // namespace pregan
