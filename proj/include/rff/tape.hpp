#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rff/errors.hpp"
#include "rff/kernels.hpp"
#include "rff/tensor.hpp"

namespace rff {

template <typename T>
class Tape;

// Handle to a node recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const BasicTensor<T>& value() const { return tape->value(*this); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Single-level reverse-mode tape. Nodes are appended in evaluation order, so
// the record is topologically sorted by construction and backward() is one
// reverse sweep.
template <typename T>
class Tape {
 public:
  using Tensor = BasicTensor<T>;
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor value) {
    check_finite("constant", value);
    nodes_.push_back(Node{"constant", std::move(value), {}, {}, nullptr, false});
    return {this, nodes_.size() - 1};
  }

  Var<T> scalar(T v) { return constant(Tensor::scalar(v)); }

  // Leaf for a trainable parameter. Registering the same parameter twice
  // returns the same node, so all uses accumulate into one gradient.
  Var<T> param(BasicParameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    check_finite("param:" + p.name, p.value);
    nodes_.push_back(Node{"param", p.value, {}, {}, &p, true});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  Var<T> record(const char* op, Tensor value, std::initializer_list<std::size_t> inputs,
                BackwardFn fn) {
    check_finite(op, value);
    bool needs = false;
    for (auto in : inputs) needs = needs || nodes_[in].requires_grad;
    nodes_.push_back(Node{op, std::move(value), {}, needs ? std::move(fn) : BackwardFn{},
                          nullptr, needs});
    return {this, nodes_.size() - 1};
  }

  const Tensor& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node, allocated (zeroed) on first access.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Reverse sweep from a scalar loss. Every parameter registered on this tape
  // has its gradient overwritten; parameters the loss does not reach get 0.
  void backward(Var<T> loss) {
    if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
    if (consumed_) throw ContractError("backward: tape already consumed");
    const Tensor& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1)
      throw ContractError("backward: loss must be 1x1, got " + lv.shape());
    consumed_ = true;
    grad(loss.id).fill(T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && has_grad(i)) n.backward(*this, i);
    }
    for (auto& [p, id] : param_nodes_) {
      if (has_grad(id)) {
        p->grad = nodes_[id].grad;
      } else {
        p->grad = Tensor(p->value.rows(), p->value.cols());
      }
    }
  }

  // Activation pattern of every kinked primitive recorded so far (relu,
  // hinge, leaky_relu). Two evaluations with equal signatures lie on the
  // same linear piece of those primitives.
  std::uint64_t kink_signature() const { return kink_hash_; }
  void mix_kink(std::uint64_t bits) {
    kink_hash_ ^= bits + 0x9e3779b97f4a7c15ULL + (kink_hash_ << 6) + (kink_hash_ >> 2);
  }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    BasicParameter<T>* param;
    bool requires_grad;
  };

  static void check_finite(const std::string& op, const Tensor& t) {
    if (!t.all_finite()) throw NumericError("non-finite output from primitive '" + op + "'");
  }

  std::vector<Node> nodes_;
  std::unordered_map<BasicParameter<T>*, std::size_t> param_nodes_;
  std::uint64_t kink_hash_ = 0;
  bool consumed_ = false;
};

namespace ad {

namespace detail {

template <typename T>
Tape<T>& same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr)
    throw ContractError(std::string(op) + ": operands live on different tapes");
  return *a.tape;
}

template <typename T>
void accumulate(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
T sum_all(const BasicTensor<T>& t) {
  Accum<T> acc = 0;
  for (T v : t.data()) acc += v;
  return static_cast<T>(acc);
}

template <typename T>
bool is_scalar(const BasicTensor<T>& t) {
  return t.rows() == 1 && t.cols() == 1;
}

// Shapes for elementwise ops: identical, or the right operand is 1x1.
template <typename T>
void check_elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (!a.same_shape(b) && !is_scalar(b))
    throw DimensionError(std::string(op) + ": shape " + a.shape() + " vs " + b.shape());
}

template <typename T, typename F, typename DF>
Var<T> unary(Var<T> x, const char* op, F f, DF df) {
  Tape<T>& tape = *x.tape;
  const auto& xv = x.value();
  BasicTensor<T> out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return tape.record(op, std::move(out), {x.id}, [xid = x.id, df](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(xid)) return;
    const auto& g = t.grad(self);
    const auto& xv = t.value(Var<T>{&t, xid});
    const auto& yv = t.value(Var<T>{&t, self});
    auto& gx = t.grad(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

template <typename T>
std::uint64_t pattern_bits(const BasicTensor<T>& x) {
  std::uint64_t h = 1469598103934665603ULL;
  for (T v : x.data()) h = (h ^ (v > T(0) ? 1u : 0u)) * 1099511628211ULL;
  return h;
}

}  // namespace detail

// y = a * b (matrix product).
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape(a, b, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: " + av.shape() + " * " + bv.shape());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  BasicTensor<T> out(m, n);
  kernels::gemm_nn<T>(av.data(), bv.data(), out.data(), m, k, n);
  return tape.record("matmul", std::move(out), {a.id, b.id},
                     [aid = a.id, bid = b.id, m, k, n](Tape<T>& t, std::size_t self) {
                       const auto& g = t.grad(self);
                       if (t.requires_grad(aid)) {
                         BasicTensor<T> da(m, k);
                         kernels::gemm_nt<T>(g.data(), t.value(Var<T>{&t, bid}).data(),
                                             da.data(), m, n, k);
                         detail::accumulate(t.grad(aid), da);
                       }
                       if (t.requires_grad(bid)) {
                         BasicTensor<T> db(k, n);
                         kernels::gemm_tn<T>(t.value(Var<T>{&t, aid}).data(), g.data(),
                                             db.data(), k, m, n);
                         detail::accumulate(t.grad(bid), db);
                       }
                     });
}

// y = x + bias, bias is 1 x cols broadcast over rows.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  Tape<T>& tape = detail::same_tape(x, bias, "add_bias");
  const auto& xv = x.value();
  const auto& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    throw DimensionError("add_bias: " + xv.shape() + " + " + bv.shape());
  BasicTensor<T> out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return tape.record("add_bias", std::move(out), {x.id, bias.id},
                     [xid = x.id, bid = bias.id](Tape<T>& t, std::size_t self) {
                       const auto& g = t.grad(self);
                       if (t.requires_grad(xid)) detail::accumulate(t.grad(xid), g);
                       if (t.requires_grad(bid)) {
                         auto& gb = t.grad(bid);
                         for (std::size_t c = 0; c < g.cols(); ++c) {
                           Accum<T> acc = 0;
                           for (std::size_t r = 0; r < g.rows(); ++r) acc += g(r, c);
                           gb[c] += static_cast<T>(acc);
                         }
                       }
                     });
}

namespace detail {

// Elementwise binary op with optional 1x1 broadcast of the right operand.
// dfa/dfb give the local partials given (a_i, b_i).
template <typename T, typename F, typename DA, typename DB>
Var<T> binary(Var<T> a, Var<T> b, const char* op, F f, DA dfa, DB dfb) {
  Tape<T>& tape = same_tape(a, b, op);
  const auto& av = a.value();
  const auto& bv = b.value();
  check_elementwise(av, bv, op);
  const bool bcast = !av.same_shape(bv);
  BasicTensor<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[bcast ? 0 : i]);
  return tape.record(
      op, std::move(out), {a.id, b.id},
      [aid = a.id, bid = b.id, bcast, dfa, dfb](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& av = t.value(Var<T>{&t, aid});
        const auto& bv = t.value(Var<T>{&t, bid});
        if (t.requires_grad(aid)) {
          auto& ga = t.grad(aid);
          for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * dfa(av[i], bv[bcast ? 0 : i]);
        }
        if (t.requires_grad(bid)) {
          auto& gb = t.grad(bid);
          if (bcast) {
            Accum<T> acc = 0;
            for (std::size_t i = 0; i < g.size(); ++i)
              acc += static_cast<Accum<T>>(g[i]) * dfb(av[i], bv[0]);
            gb[0] += static_cast<T>(acc);
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * dfb(av[i], bv[i]);
          }
        }
      });
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return detail::binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return detail::binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return detail::binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

// Subgradient at 0 is 0 for relu, hinge and leaky_relu alike.
template <typename T>
Var<T> relu(Var<T> x) {
  x.tape->mix_kink(detail::pattern_bits(x.value()));
  return detail::unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// max(0, x); the same map as relu, recorded under its own name so hinge
// losses read naturally on the tape.
template <typename T>
Var<T> hinge(Var<T> x) {
  x.tape->mix_kink(detail::pattern_bits(x.value()));
  return detail::unary(
      x, "hinge", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope) {
  x.tape->mix_kink(detail::pattern_bits(x.value()));
  return detail::unary(
      x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> exp(Var<T> x) {
  return detail::unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> x) {
  return detail::unary(
      x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary(
      x, "sigmoid",
      [](T v) {
        return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> square(Var<T> x) {
  return detail::unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// 1x1 sum of all entries, accumulated in Accum<T>.
template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& tape = *x.tape;
  auto out = BasicTensor<T>::scalar(detail::sum_all(x.value()));
  return tape.record("sum", std::move(out), {x.id}, [xid = x.id](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(xid)) return;
    const T g = t.grad(self)[0];
    auto& gx = t.grad(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  Tape<T>& tape = *x.tape;
  const auto& xv = x.value();
  if (xv.empty()) throw DimensionError("mean of empty tensor");
  Accum<T> acc = 0;
  for (T v : xv.data()) acc += v;
  const Accum<T> n = static_cast<Accum<T>>(xv.size());
  auto out = BasicTensor<T>::scalar(static_cast<T>(acc / n));
  return tape.record("mean", std::move(out), {x.id},
                     [xid = x.id, n](Tape<T>& t, std::size_t self) {
                       if (!t.requires_grad(xid)) return;
                       const T g = static_cast<T>(t.grad(self)[0] / n);
                       auto& gx = t.grad(xid);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
                     });
}

// Mean over rows of -log softmax(logits)[label]. Fused for stability.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  Tape<T>& tape = *logits.tape;
  const auto& lv = logits.value();
  if (labels.size() != lv.rows())
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(lv.rows()) + " rows");
  if (lv.rows() == 0) throw DimensionError("softmax_cross_entropy: empty batch");
  const std::size_t n = lv.rows(), k = lv.cols();
  BasicTensor<T> probs(n, k);
  std::vector<int> y(labels.begin(), labels.end());
  Accum<T> total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (y[r] < 0 || static_cast<std::size_t>(y[r]) >= k)
      throw ContractError("softmax_cross_entropy: label " + std::to_string(y[r]) +
                          " outside [0, " + std::to_string(k) + ")");
    Accum<T> mx = lv(r, 0);
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, static_cast<Accum<T>>(lv(r, c)));
    Accum<T> z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<Accum<T>>(lv(r, c)) - mx);
    const Accum<T> lse = mx + std::log(z);
    for (std::size_t c = 0; c < k; ++c)
      probs(r, c) = static_cast<T>(std::exp(static_cast<Accum<T>>(lv(r, c)) - lse));
    total += lse - static_cast<Accum<T>>(lv(r, static_cast<std::size_t>(y[r])));
  }
  auto out = BasicTensor<T>::scalar(static_cast<T>(total / static_cast<Accum<T>>(n)));
  return tape.record("softmax_cross_entropy", std::move(out), {logits.id},
                     [lid = logits.id, probs = std::move(probs), y = std::move(y)](
                         Tape<T>& t, std::size_t self) {
                       if (!t.requires_grad(lid)) return;
                       const T g = t.grad(self)[0] / static_cast<T>(probs.rows());
                       auto& gl = t.grad(lid);
                       for (std::size_t r = 0; r < probs.rows(); ++r)
                         for (std::size_t c = 0; c < probs.cols(); ++c) {
                           const T onehot = static_cast<int>(c) == y[r] ? T(1) : T(0);
                           gl(r, c) += g * (probs(r, c) - onehot);
                         }
                     });
}

// Conveniences composed from the primitives above.

template <typename T>
Var<T> scale(Var<T> x, T s) {
  return mul(x, x.tape->scalar(s));
}

template <typename T>
Var<T> shift(Var<T> x, T s) {
  return add(x, x.tape->scalar(s));
}

// Row-wise sum as a rows x 1 column, via a product with a ones vector.
template <typename T>
Var<T> row_sum(Var<T> x) {
  return matmul(x, x.tape->constant(BasicTensor<T>(x.cols(), 1, T(1))));
}

// Clamp to [lo, hi] as lo + relu(x - lo) - relu(x - hi).
template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  auto above_lo = relu(shift(x, -lo));
  auto above_hi = relu(shift(x, -hi));
  return shift(sub(above_lo, above_hi), lo);
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

}  // namespace ad
}  // namespace rff
