#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "handdi/errors.hpp"
#include "handdi/random.hpp"
#include "handdi/tensor.hpp"

namespace handdi {

template <std::floating_point T>
class Tape;

/// Handle to a value recorded on a Tape.
template <std::floating_point T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const {
    if (!tape_) throw ContractError("use of an unbound Var");
    return *tape_;
  }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const { return tape().value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records forward operations in creation order (which is a topological order)
/// and replays their adjoints in reverse.
///
/// A Tape is pinned in memory: Vars hold a pointer to it.
template <std::floating_point T>
class Tape {
 public:
  /// Adjoint of one recorded op: receives the output gradient and pushes
  /// contributions into its inputs through accumulate().
  using Adjoint = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, {}); }
  Var<T> parameter(Tensor<T> value) { return push("parameter", std::move(value), true, {}); }

  /// Appends an op result. requires_grad is inherited from the inputs.
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                Adjoint adjoint) {
    return record(op, std::move(value), std::vector<Var<T>>(inputs), std::move(adjoint));
  }

  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                Adjoint adjoint) {
    bool needs = false;
    for (const auto& v : inputs) {
      if (&v.tape() != this) throw ContractError("op '" + std::string(op) + "' mixes tapes");
      needs = needs || nodes_[v.id()].requires_grad;
    }
    if (!value.all_finite()) {
      throw NumericError("non-finite value produced by op '" + std::string(op) + "' " +
                         shape_string(value.shape()));
    }
    Var<T> out = push(op, std::move(value), needs, needs ? std::move(adjoint) : Adjoint{});
    return out;
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_.at(id).op; }

  /// Gradient of the last backward() loss with respect to v. Zero for any node
  /// that requires grad but does not reach the loss.
  const Tensor<T>& grad(Var<T> v) const {
    const auto& node = nodes_.at(v.id());
    if (!backward_done_) throw ContractError("grad() requested before backward()");
    if (!node.requires_grad) throw ContractError("grad() requested for a constant");
    return node.grad;
  }

  void accumulate(Var<T> v, const Tensor<T>& contribution) {
    auto& node = nodes_[v.id()];
    if (!node.requires_grad) return;
    auto dst = node.grad.data();
    auto src = contribution.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// Mutable view of a node's gradient buffer for adjoints that scatter.
  Tensor<T>* grad_buffer(Var<T> v) {
    auto& node = nodes_[v.id()];
    return node.requires_grad ? &node.grad : nullptr;
  }

  void backward(Var<T> loss) {
    if (&loss.tape() != this) throw ContractError("backward() on a Var from another tape");
    if (value(loss).size() != 1) {
      throw ContractError("backward() needs a scalar loss, got " + shape_string(value(loss).shape()));
    }
    for (auto& node : nodes_) {
      if (node.requires_grad) node.grad = Tensor<T>(node.value.shape(), std::vector<T>(node.value.size(), T{0}));
    }
    backward_done_ = true;
    visit_order_.clear();
    auto& root = nodes_[loss.id()];
    if (!root.requires_grad) return;
    root.grad[0] = T{1};
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      auto& node = nodes_[id];
      if (!node.requires_grad || !node.adjoint) continue;
      visit_order_.push_back(id);
      if (node.op == perturbed_op_) {
        Tensor<T> scaled = node.grad;
        for (auto& g : scaled.data()) g *= perturb_factor_;
        node.adjoint(*this, scaled);
      } else {
        node.adjoint(*this, node.grad);
      }
    }
  }

  /// Node ids whose adjoints ran in the last backward(), in visit order.
  const std::vector<std::size_t>& last_visit_order() const noexcept { return visit_order_; }

  /// Sign pattern (x > 0) of every input fed through a piecewise-linear unary
  /// op. Two forward passes with equal patterns lie on the same linear piece.
  const std::vector<std::uint8_t>& kink_pattern() const noexcept { return kinks_; }
  void note_kink(bool active) { kinks_.push_back(active ? 1 : 0); }
  void note_kinks(const Tensor<T>& input) {
    for (T x : input.data()) kinks_.push_back(x > T{0} ? 1 : 0);
  }

  /// Fault injection for verifying the gradient checker: every adjoint of ops
  /// named `op` sees its output gradient multiplied by `factor`.
  void perturb_adjoint(std::string op, T factor) {
    perturbed_op_ = std::move(op);
    perturb_factor_ = factor;
  }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Adjoint adjoint;
  };

  Var<T> push(std::string_view op, Tensor<T> value, bool requires_grad, Adjoint adjoint) {
    if (!value.all_finite()) throw NumericError("non-finite leaf value");
    nodes_.push_back(Node{std::string(op), std::move(value), Tensor<T>{}, requires_grad, std::move(adjoint)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
  std::vector<std::uint8_t> kinks_;
  bool backward_done_ = false;
  std::string perturbed_op_;
  T perturb_factor_ = T{1};
};

namespace detail {

inline void require_matrix_shape(const Shape& s, const char* op) {
  if (s.size() != 2) throw DimensionError(std::string(op) + ": expected rank-2 input, got " + shape_string(s));
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

template <std::floating_point T>
void matmul_into(const Tensor<T>& a, bool ta, const Tensor<T>& b, bool tb, Tensor<T>& out) {
  // out (+)= op(a) * op(b); op = optional transpose.
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const T av = ta ? a(t, i) : a(i, t);
      if (av == T{0}) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * (tb ? b(j, t) : b(t, j));
    }
  }
}

}  // namespace detail

/// C = A B.
template <std::floating_point T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_matrix_shape(av.shape(), "matmul");
  detail::require_matrix_shape(bv.shape(), "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner extents disagree, " + shape_string(av.shape()) + " * " +
                         shape_string(bv.shape()));
  }
  Tensor<T> out(av.rows(), bv.cols());
  detail::matmul_into(av, false, bv, false, out);
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    if (auto* ga = tape.grad_buffer(a)) detail::matmul_into(g, false, b.value(), true, *ga);
    if (auto* gb = tape.grad_buffer(b)) detail::matmul_into(a.value(), true, g, false, *gb);
  });
}

template <std::floating_point T>
Var<T> transpose(Var<T> a) {
  const auto& av = a.value();
  detail::require_matrix_shape(av.shape(), "transpose");
  Tensor<T> out(av.cols(), av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  return a.tape().record("transpose", std::move(out), {a}, [a](Tape<T>& tape, const Tensor<T>& g) {
    auto* ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < ga->rows(); ++i)
      for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += g(j, i);
  });
}

template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

/// X + 1 b^T: adds the column vector b (m x 1) to every row of X (n x m).
template <std::floating_point T>
Var<T> add_row_broadcast(Var<T> x, Var<T> b) {
  const auto& xv = x.value();
  const auto& bv = b.value();
  detail::require_matrix_shape(xv.shape(), "add_row_broadcast");
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_row_broadcast: bias " + shape_string(bv.shape()) + " vs input " +
                         shape_string(xv.shape()));
  }
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  return x.tape().record("add_row_broadcast", std::move(out), {x, b},
                         [x, b](Tape<T>& tape, const Tensor<T>& g) {
                           tape.accumulate(x, g);
                           if (auto* gb = tape.grad_buffer(b)) {
                             for (std::size_t i = 0; i < g.rows(); ++i)
                               for (std::size_t j = 0; j < g.cols(); ++j) (*gb)[j] += g(i, j);
                           }
                         });
}

/// X * s for a 1x1 tensor s.
template <std::floating_point T>
Var<T> scale(Var<T> x, Var<T> s) {
  if (s.value().size() != 1) throw DimensionError("scale: factor must be 1x1, got " + shape_string(s.shape()));
  const T factor = s.value()[0];
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v *= factor;
  return x.tape().record("scale", std::move(out), {x, s}, [x, s](Tape<T>& tape, const Tensor<T>& g) {
    const T f = s.value()[0];
    if (auto* gx = tape.grad_buffer(x))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * f;
    if (auto* gs = tape.grad_buffer(s)) {
      T acc{0};
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.value()[i];
      (*gs)[0] += acc;
    }
  });
}

/// Single element X[i, j] as a 1x1 tensor.
template <std::floating_point T>
Var<T> pick(Var<T> x, std::size_t i, std::size_t j) {
  const auto& xv = x.value();
  if (i >= xv.rows() || j >= xv.cols()) throw DimensionError("pick: index out of range for " + shape_string(xv.shape()));
  return x.tape().record("pick", Tensor<T>::scalar(xv(i, j)), {x}, [x, i, j](Tape<T>& tape, const Tensor<T>& g) {
    (*tape.grad_buffer(x))(i, j) += g[0];
  });
}

template <std::floating_point T>
Var<T> sum_all(Var<T> x) {
  T acc{0};
  for (T v : x.value().data()) acc += v;
  return x.tape().record("sum_all", Tensor<T>::scalar(acc), {x}, [x](Tape<T>& tape, const Tensor<T>& g) {
    for (auto& d : tape.grad_buffer(x)->data()) d += g[0];
  });
}

template <std::floating_point T>
Var<T> mean_all(Var<T> x) {
  const T n = static_cast<T>(x.value().size());
  T acc{0};
  for (T v : x.value().data()) acc += v;
  return x.tape().record("mean_all", Tensor<T>::scalar(acc / n), {x}, [x, n](Tape<T>& tape, const Tensor<T>& g) {
    for (auto& d : tape.grad_buffer(x)->data()) d += g[0] / n;
  });
}

/// Horizontal concatenation of equal-height blocks, in argument order.
template <std::floating_point T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row extents differ");
    cols += p.cols();
  }
  Tensor<T> out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, offset + j) = pv(i, j);
    offset += pv.cols();
  }
  return parts.front().tape().record("concat_cols", std::move(out), parts,
                                     [parts](Tape<T>& tape, const Tensor<T>& g) {
                                       std::size_t off = 0;
                                       for (const auto& p : parts) {
                                         const std::size_t c = p.cols();
                                         if (auto* gp = tape.grad_buffer(p)) {
                                           for (std::size_t i = 0; i < g.rows(); ++i)
                                             for (std::size_t j = 0; j < c; ++j) (*gp)(i, j) += g(i, off + j);
                                         }
                                         off += c;
                                       }
                                     });
}

/// Rows of X selected by index, in order (duplicates allowed).
template <std::floating_point T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> index) {
  const auto& xv = x.value();
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  Tensor<T> out(index.size(), xv.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= xv.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(index[r]) + " out of range for " +
                           shape_string(xv.shape()));
    }
    for (std::size_t j = 0; j < xv.cols(); ++j) out(r, j) = xv(index[r], j);
  }
  return x.tape().record("gather_rows", std::move(out), {x},
                         [x, index = std::move(index)](Tape<T>& tape, const Tensor<T>& g) {
                           auto* gx = tape.grad_buffer(x);
                           for (std::size_t r = 0; r < index.size(); ++r)
                             for (std::size_t j = 0; j < g.cols(); ++j) (*gx)(index[r], j) += g(r, j);
                         });
}

/// Row-wise inner products of two equal-shape matrices, as an n x 1 column.
template <std::floating_point T>
Var<T> row_dot(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "row_dot");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    T acc{0};
    for (std::size_t j = 0; j < av.cols(); ++j) acc += av(i, j) * bv(i, j);
    out(i, 0) = acc;
  }
  return a.tape().record("row_dot", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    const auto& av = a.value();
    const auto& bv = b.value();
    auto* ga = tape.grad_buffer(a);
    auto* gb = tape.grad_buffer(b);
    for (std::size_t i = 0; i < av.rows(); ++i) {
      for (std::size_t j = 0; j < av.cols(); ++j) {
        if (ga) (*ga)(i, j) += g(i, 0) * bv(i, j);
        if (gb) (*gb)(i, j) += g(i, 0) * av(i, j);
      }
    }
  });
}

enum class UnaryKind { Relu, LeakyRelu, Tanh, Sigmoid, Exp };

struct Unary {
  UnaryKind kind = UnaryKind::Relu;
  double slope = 0.0;  // LeakyRelu only

  static Unary relu() { return {UnaryKind::Relu, 0.0}; }
  static Unary leaky_relu(double slope) { return {UnaryKind::LeakyRelu, slope}; }
  static Unary tanh() { return {UnaryKind::Tanh, 0.0}; }
  static Unary sigmoid() { return {UnaryKind::Sigmoid, 0.0}; }
  static Unary exp() { return {UnaryKind::Exp, 0.0}; }
};

inline const char* unary_name(UnaryKind kind) {
  switch (kind) {
    case UnaryKind::Relu: return "relu";
    case UnaryKind::LeakyRelu: return "leaky_relu";
    case UnaryKind::Tanh: return "tanh";
    case UnaryKind::Sigmoid: return "sigmoid";
    case UnaryKind::Exp: return "exp";
  }
  return "unknown";
}

template <std::floating_point T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <std::floating_point T>
Var<T> apply_unary(Unary fn, Var<T> x) {
  const T slope = static_cast<T>(fn.slope);
  Tensor<T> out = x.value();
  for (auto& v : out.data()) {
    switch (fn.kind) {
      case UnaryKind::Relu: v = v > T{0} ? v : T{0}; break;
      case UnaryKind::LeakyRelu: v = v > T{0} ? v : slope * v; break;
      case UnaryKind::Tanh: v = std::tanh(v); break;
      case UnaryKind::Sigmoid: v = stable_sigmoid(v); break;
      case UnaryKind::Exp: v = std::exp(v); break;
    }
  }
  auto& tape = x.tape();
  if (fn.kind == UnaryKind::Relu || fn.kind == UnaryKind::LeakyRelu) tape.note_kinks(x.value());
  const std::size_t out_id = tape.size();
  return tape.record(unary_name(fn.kind), std::move(out), {x},
                     [x, fn, slope, out_id](Tape<T>& tape, const Tensor<T>& g) {
                       const auto& in = x.value();
                       const auto& y = tape.value(Var<T>(&tape, out_id));
                       auto* gx = tape.grad_buffer(x);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         T d{};
                         switch (fn.kind) {
                           case UnaryKind::Relu: d = in[i] > T{0} ? T{1} : T{0}; break;
                           case UnaryKind::LeakyRelu: d = in[i] > T{0} ? T{1} : slope; break;
                           case UnaryKind::Tanh: d = T{1} - y[i] * y[i]; break;
                           case UnaryKind::Sigmoid: d = y[i] * (T{1} - y[i]); break;
                           case UnaryKind::Exp: d = y[i]; break;
                         }
                         (*gx)[i] += g[i] * d;
                       }
                     });
}

/// Row-wise softmax restricted to mask; masked-out entries are exactly zero.
/// Each row is shifted by its masked maximum before exponentiation.
template <std::floating_point T>
Var<T> masked_row_softmax(Var<T> s, const Mask& mask) {
  const auto& sv = s.value();
  detail::require_matrix_shape(sv.shape(), "masked_row_softmax");
  if (mask.rows() != sv.rows() || mask.cols() != sv.cols()) {
    throw DimensionError("masked_row_softmax: mask " + std::to_string(mask.rows()) + "x" +
                         std::to_string(mask.cols()) + " vs scores " + shape_string(sv.shape()));
  }
  Tensor<T> out(sv.rows(), sv.cols());
  for (std::size_t i = 0; i < sv.rows(); ++i) {
    T row_max = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < sv.cols(); ++j)
      if (mask(i, j)) row_max = std::max(row_max, sv(i, j));
    if (row_max == -std::numeric_limits<T>::infinity()) {
      throw ContractError("masked_row_softmax: row " + std::to_string(i) + " has no unmasked entry");
    }
    T total{0};
    for (std::size_t j = 0; j < sv.cols(); ++j) {
      if (!mask(i, j)) continue;
      out(i, j) = std::exp(sv(i, j) - row_max);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < sv.cols(); ++j) out(i, j) /= total;
  }
  const std::size_t out_id = s.tape().size();
  return s.tape().record("masked_row_softmax", std::move(out), {s}, [s, out_id](Tape<T>& tape, const Tensor<T>& g) {
    const auto& a = tape.value(Var<T>(&tape, out_id));
    auto* gs = tape.grad_buffer(s);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      T dot{0};
      for (std::size_t j = 0; j < a.cols(); ++j) dot += a(i, j) * g(i, j);
      for (std::size_t j = 0; j < a.cols(); ++j) (*gs)(i, j) += a(i, j) * (g(i, j) - dot);
    }
  });
}

/// Inverted dropout. Identity (the same Var) in eval mode or at rate 0.
template <std::floating_point T>
Var<T> dropout(Var<T> x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(x.shape(), std::vector<T>(x.value().size()));
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = uniform01(rng) < rate ? T{0} : keep_scale;
    out[i] *= mask[i];
  }
  return x.tape().record("dropout", std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& tape, const Tensor<T>& g) {
    auto* gx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
  });
}

/// Pairwise attention logits for a concatenated scorer a = [a_src; a_dst]
/// (2F x 1) over node features H (n x F): E[i, j] = a_src . H[i] + a_dst . H[j].
template <std::floating_point T>
Var<T> pair_scores(Var<T> h, Var<T> a) {
  const auto& hv = h.value();
  const auto& av = a.value();
  detail::require_matrix_shape(hv.shape(), "pair_scores");
  const std::size_t n = hv.rows();
  const std::size_t f = hv.cols();
  if (av.size() != 2 * f) {
    throw DimensionError("pair_scores: attention vector " + shape_string(av.shape()) + " vs features " +
                         shape_string(hv.shape()));
  }
  std::vector<T> src(n, T{0}), dst(n, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < f; ++t) {
      src[i] += av[t] * hv(i, t);
      dst[i] += av[f + t] * hv(i, t);
    }
  }
  Tensor<T> out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = src[i] + dst[j];
  return h.tape().record("pair_scores", std::move(out), {h, a}, [h, a, n, f](Tape<T>& tape, const Tensor<T>& g) {
    std::vector<T> row_sum(n, T{0}), col_sum(n, T{0});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        row_sum[i] += g(i, j);
        col_sum[j] += g(i, j);
      }
    }
    const auto& hv = h.value();
    const auto& av = a.value();
    if (auto* gh = tape.grad_buffer(h)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < f; ++t) (*gh)(i, t) += av[t] * row_sum[i] + av[f + t] * col_sum[i];
    }
    if (auto* ga = tape.grad_buffer(a)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < f; ++t) {
          (*ga)[t] += row_sum[i] * hv(i, t);
          (*ga)[f + t] += col_sum[i] * hv(i, t);
        }
      }
    }
  });
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Summed binary cross-entropy of probabilities (n x 1) against 0/1 labels.
/// Probabilities are clamped to [1e-7, 1 - 1e-7]; the adjoint is zero where the
/// clamp is active.
template <std::floating_point T>
Var<T> bce_sum(Var<T> predictions, std::span<const T> labels) {
  const auto& pv = predictions.value();
  if (pv.size() != labels.size()) {
    throw DimensionError("bce: " + std::to_string(pv.size()) + " predictions vs " + std::to_string(labels.size()) +
                         " labels");
  }
  const T lo = static_cast<T>(kProbabilityClamp);
  const T hi = T{1} - lo;
  std::vector<T> y(labels.begin(), labels.end());
  T loss{0};
  auto& tape = predictions.tape();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (y[i] != T{0} && y[i] != T{1}) throw ContractError("bce: label " + std::to_string(y[i]) + " is not 0 or 1");
    const T p = std::clamp(pv[i], lo, hi);
    tape.note_kink(p != pv[i]);
    loss -= y[i] * std::log(p) + (T{1} - y[i]) * std::log(T{1} - p);
  }
  return tape.record("bce_sum", Tensor<T>::scalar(loss), {predictions},
                                   [predictions, y = std::move(y), lo, hi](Tape<T>& tape, const Tensor<T>& g) {
                                     const auto& pv = predictions.value();
                                     auto* gp = tape.grad_buffer(predictions);
                                     for (std::size_t i = 0; i < pv.size(); ++i) {
                                       const T p = pv[i];
                                       if (p < lo || p > hi) continue;  // flat where clamped
                                       (*gp)[i] += g[0] * (-y[i] / p + (T{1} - y[i]) / (T{1} - p));
                                     }
                                   });
}

/// Summed binary cross-entropy of sigmoid(logits) against 0/1 labels,
/// evaluated without forming 1 - p. Logits are clamped to the range matching
/// the probability clamp of bce_sum.
template <std::floating_point T>
Var<T> bce_logits_sum(Var<T> logits, std::span<const T> labels) {
  const auto& xv = logits.value();
  if (xv.size() != labels.size()) {
    throw DimensionError("bce: " + std::to_string(xv.size()) + " logits vs " + std::to_string(labels.size()) +
                         " labels");
  }
  const T bound = static_cast<T>(std::log((1.0 - kProbabilityClamp) / kProbabilityClamp));
  std::vector<T> y(labels.begin(), labels.end());
  auto& tape = logits.tape();
  T loss{0};
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (y[i] != T{0} && y[i] != T{1}) throw ContractError("bce: label " + std::to_string(y[i]) + " is not 0 or 1");
    const T x = std::clamp(xv[i], -bound, bound);
    tape.note_kink(x != xv[i]);
    // -[y log s(x) + (1-y) log(1-s(x))] = softplus(x) - y x
    loss += std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x))) - y[i] * x;
  }
  return tape.record("bce_logits_sum", Tensor<T>::scalar(loss), {logits},
                     [logits, y = std::move(y), bound](Tape<T>& tape, const Tensor<T>& g) {
                       const auto& xv = logits.value();
                       auto* gx = tape.grad_buffer(logits);
                       if (!gx) return;
                       for (std::size_t i = 0; i < xv.size(); ++i) {
                         if (xv[i] < -bound || xv[i] > bound) continue;
                         (*gx)[i] += g[0] * (stable_sigmoid(xv[i]) - y[i]);
                       }
                     });
}

}  // namespace handdi
