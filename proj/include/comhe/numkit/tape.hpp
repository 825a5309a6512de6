#ifndef COMHE_NUMKIT_TAPE_HPP
#define COMHE_NUMKIT_TAPE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comhe/numkit/matrix.hpp"

// Reverse-mode autodiff over dense matrices.
//
// Every node holds a matrix value. backward() runs a numeric reverse sweep.
// grad() runs a *symbolic* reverse sweep: the adjoints it produces are new
// nodes on the same tape, so a later backward() differentiates through them.
// That gives exactly one level of nesting, which is what one-step unrolled
// optimization needs. Ops without a symbolic rule throw NotTwiceDifferentiable
// if grad() has to pass through them.

namespace comhe::ad {

enum class OpKind {
  leaf,
  constant,
  matmul,
  transpose,
  add,
  sub,
  scale,
  add_scalar,
  hadamard,
  power,
  log,
  arccos,
  arccos_grad,
  sum,
  mean,
  expand,
  row_sum,
  row_scale,
  rowwise_normalize,
  max,
  row_slice,
  vstack,
  add_row,
  relu,
  softmax_cross_entropy,
  custom,
};

/// Inputs to arccos are clamped to this band before evaluation and differentiation.
inline constexpr double kArccosClamp = 1e-12;

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

using NumericVjp = std::function<std::vector<Matrix>(const Tape&, const Matrix& grad_out)>;
using SymbolicVjp = std::function<std::vector<Var>(Tape&, Var grad_out)>;

struct Node {
  OpKind kind = OpKind::leaf;
  std::vector<std::size_t> parents;
  Matrix value;
  bool requires_grad = false;
  NumericVjp vjp;
  SymbolicVjp symbolic_vjp;
};

/// Per-leaf gradients; each has the shape of its leaf.
class Gradient {
 public:
  const Matrix& operator[](Var v) const { return at(v.id); }
  const Matrix& at(std::size_t id) const {
    auto it = grads_.find(id);
    if (it == grads_.end()) throw InvalidArgument("node " + std::to_string(id) + " is not a leaf");
    return it->second;
  }
  void set(std::size_t id, Matrix g) { grads_[id] = std::move(g); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::map<std::size_t, Matrix> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value) {
    Node n;
    n.kind = OpKind::leaf;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
  }

  Var constant(Matrix value) {
    Node n;
    n.kind = OpKind::constant;
    n.value = std::move(value);
    return push(std::move(n));
  }

  /// Appends an op node. requires_grad is inherited from the parents.
  Var record(OpKind kind, std::vector<std::size_t> parents, Matrix value, NumericVjp vjp,
             SymbolicVjp symbolic = {}) {
    Node n;
    n.kind = kind;
    n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [this](std::size_t p) { return nodes_[p].requires_grad; });
    n.parents = std::move(parents);
    n.value = std::move(value);
    n.vjp = std::move(vjp);
    n.symbolic_vjp = std::move(symbolic);
    return push(std::move(n));
  }

  const Node& node(std::size_t id) const { return nodes_[id]; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }

namespace detail {

inline void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw InvalidArgument("vars live on different tapes");
}

inline Matrix map(const Matrix& a, auto fn) {
  Matrix out = a;
  for (double& v : out.data()) v = fn(v);
  return out;
}

inline double clamp_unit(double x) {
  return std::clamp(x, -1.0 + kArccosClamp, 1.0 - kArccosClamp);
}

}  // namespace detail

// ---- primitive ops ---------------------------------------------------------

inline Var transpose(Var a);
inline Var expand(Var scalar, std::size_t rows, std::size_t cols);
inline Var sum(Var a);
inline Var row_sum(Var a);
inline Var row_scale(Var a, Var v);

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  Tape& t = *a.tape;
  return t.record(
      OpKind::matmul, {a.id, b.id}, comhe::matmul(a.value(), b.value()),
      [ai = a.id, bi = b.id](const Tape& tp, const Matrix& g) {
        return std::vector<Matrix>{comhe::matmul_nt(g, tp.value(bi)),
                                   comhe::matmul(comhe::transpose(tp.value(ai)), g)};
      },
      [a, b](Tape&, Var g) {
        return std::vector<Var>{matmul(g, transpose(b)), matmul(transpose(a), g)};
      });
}

inline Var transpose(Var a) {
  return a.tape->record(
      OpKind::transpose, {a.id}, comhe::transpose(a.value()),
      [](const Tape&, const Matrix& g) { return std::vector<Matrix>{comhe::transpose(g)}; },
      [](Tape&, Var g) { return std::vector<Var>{transpose(g)}; });
}

inline Var add(Var a, Var b) {
  detail::same_tape(a, b);
  return a.tape->record(
      OpKind::add, {a.id, b.id}, a.value() + b.value(),
      [](const Tape&, const Matrix& g) { return std::vector<Matrix>{g, g}; },
      [](Tape&, Var g) { return std::vector<Var>{g, g}; });
}

inline Var scale(Var a, double c);

inline Var sub(Var a, Var b) {
  detail::same_tape(a, b);
  return a.tape->record(
      OpKind::sub, {a.id, b.id}, a.value() - b.value(),
      [](const Tape&, const Matrix& g) { return std::vector<Matrix>{g, -1.0 * g}; },
      [](Tape&, Var g) { return std::vector<Var>{g, scale(g, -1.0)}; });
}

inline Var scale(Var a, double c) {
  return a.tape->record(
      OpKind::scale, {a.id}, c * a.value(),
      [c](const Tape&, const Matrix& g) { return std::vector<Matrix>{c * g}; },
      [c](Tape&, Var g) { return std::vector<Var>{scale(g, c)}; });
}

inline Var add_scalar(Var a, double c) {
  return a.tape->record(
      OpKind::add_scalar, {a.id}, detail::map(a.value(), [c](double v) { return v + c; }),
      [](const Tape&, const Matrix& g) { return std::vector<Matrix>{g}; },
      [](Tape&, Var g) { return std::vector<Var>{g}; });
}

inline Var hadamard(Var a, Var b) {
  detail::same_tape(a, b);
  return a.tape->record(
      OpKind::hadamard, {a.id, b.id}, comhe::hadamard(a.value(), b.value()),
      [ai = a.id, bi = b.id](const Tape& tp, const Matrix& g) {
        return std::vector<Matrix>{comhe::hadamard(g, tp.value(bi)),
                                   comhe::hadamard(g, tp.value(ai))};
      },
      [a, b](Tape&, Var g) { return std::vector<Var>{hadamard(g, b), hadamard(g, a)}; });
}

/// Elementwise a^p.
inline Var power(Var a, double p) {
  return a.tape->record(
      OpKind::power, {a.id}, detail::map(a.value(), [p](double v) { return std::pow(v, p); }),
      [ai = a.id, p](const Tape& tp, const Matrix& g) {
        Matrix d = detail::map(tp.value(ai), [p](double v) { return p * std::pow(v, p - 1.0); });
        return std::vector<Matrix>{comhe::hadamard(g, d)};
      },
      [a, p](Tape&, Var g) { return std::vector<Var>{hadamard(g, scale(power(a, p - 1.0), p))}; });
}

inline Var log(Var a) {
  return a.tape->record(
      OpKind::log, {a.id}, detail::map(a.value(), [](double v) { return std::log(v); }),
      [ai = a.id](const Tape& tp, const Matrix& g) {
        Matrix d = detail::map(tp.value(ai), [](double v) { return 1.0 / v; });
        return std::vector<Matrix>{comhe::hadamard(g, d)};
      },
      [a](Tape&, Var g) { return std::vector<Var>{hadamard(g, power(a, -1.0))}; });
}

/// Elementwise d/dx arccos(x) = -1/sqrt(1-x^2), evaluated at the clamped input.
/// First-order only; it exists so that arccos has a symbolic rule.
inline Var arccos_grad(Var a) {
  return a.tape->record(
      OpKind::arccos_grad, {a.id}, detail::map(a.value(), [](double v) {
        const double x = detail::clamp_unit(v);
        return -1.0 / std::sqrt(1.0 - x * x);
      }),
      [ai = a.id](const Tape& tp, const Matrix& g) {
        Matrix d = detail::map(tp.value(ai), [](double v) {
          const double x = detail::clamp_unit(v);
          return -x * std::pow(1.0 - x * x, -1.5);
        });
        return std::vector<Matrix>{comhe::hadamard(g, d)};
      });
}

/// Elementwise arccos with inputs clamped to [-1+1e-12, 1-1e-12].
inline Var arccos(Var a) {
  return a.tape->record(
      OpKind::arccos, {a.id},
      detail::map(a.value(), [](double v) { return std::acos(detail::clamp_unit(v)); }),
      [ai = a.id](const Tape& tp, const Matrix& g) {
        Matrix d = detail::map(tp.value(ai), [](double v) {
          const double x = detail::clamp_unit(v);
          return -1.0 / std::sqrt(1.0 - x * x);
        });
        return std::vector<Matrix>{comhe::hadamard(g, d)};
      },
      [a](Tape&, Var g) { return std::vector<Var>{hadamard(g, arccos_grad(a))}; });
}

/// Sum of all entries, as a 1x1 node.
inline Var sum(Var a) {
  const std::size_t r = a.rows(), c = a.cols();
  return a.tape->record(
      OpKind::sum, {a.id}, Matrix::scalar(comhe::sum(a.value())),
      [r, c](const Tape&, const Matrix& g) { return std::vector<Matrix>{Matrix(r, c, g(0, 0))}; },
      [r, c](Tape&, Var g) { return std::vector<Var>{expand(g, r, c)}; });
}

inline Var mean(Var a) {
  const std::size_t r = a.rows(), c = a.cols();
  const double inv = 1.0 / static_cast<double>(r * c);
  return a.tape->record(
      OpKind::mean, {a.id}, Matrix::scalar(inv * comhe::sum(a.value())),
      [r, c, inv](const Tape&, const Matrix& g) {
        return std::vector<Matrix>{Matrix(r, c, inv * g(0, 0))};
      },
      [r, c, inv](Tape&, Var g) { return std::vector<Var>{scale(expand(g, r, c), inv)}; });
}

/// Broadcasts a 1x1 node to rows x cols.
inline Var expand(Var s, std::size_t rows, std::size_t cols) {
  if (!s.value().is_scalar()) throw ShapeMismatch("expand needs a 1x1 input");
  return s.tape->record(
      OpKind::expand, {s.id}, Matrix(rows, cols, s.value()(0, 0)),
      [](const Tape&, const Matrix& g) {
        return std::vector<Matrix>{Matrix::scalar(comhe::sum(g))};
      },
      [](Tape&, Var g) { return std::vector<Var>{sum(g)}; });
}

/// Column vector of row sums.
inline Var row_sum(Var a) {
  const std::size_t r = a.rows(), c = a.cols();
  Matrix out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (double v : a.value().row(i)) acc += v;
    out(i, 0) = acc;
  }
  return a.tape->record(
      OpKind::row_sum, {a.id}, std::move(out),
      [r, c](const Tape&, const Matrix& g) {
        Matrix d(r, c);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) d(i, j) = g(i, 0);
        return std::vector<Matrix>{d};
      },
      [r, c](Tape& tp, Var g) {
        return std::vector<Var>{row_scale(tp.constant(Matrix(r, c, 1.0)), g)};
      });
}

/// Multiplies row i of `a` by v(i, 0).
inline Var row_scale(Var a, Var v) {
  detail::same_tape(a, v);
  if (v.cols() != 1 || v.rows() != a.rows()) {
    throw ShapeMismatch("row_scale: " + a.value().shape_string() + " by " +
                        v.value().shape_string());
  }
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& x : out.row(i)) x *= v.value()(i, 0);
  return a.tape->record(
      OpKind::row_scale, {a.id, v.id}, std::move(out),
      [ai = a.id, vi = v.id](const Tape& tp, const Matrix& g) {
        const Matrix& av = tp.value(ai);
        const Matrix& vv = tp.value(vi);
        Matrix ga = g;
        Matrix gv(av.rows(), 1);
        for (std::size_t i = 0; i < av.rows(); ++i) {
          for (double& x : ga.row(i)) x *= vv(i, 0);
          gv(i, 0) = comhe::dot(g.row(i), av.row(i));
        }
        return std::vector<Matrix>{ga, gv};
      },
      [a, v](Tape&, Var g) {
        return std::vector<Var>{row_scale(g, v), row_sum(hadamard(g, a))};
      });
}

/// Scales every row to unit norm. Throws DegenerateRow below kNormTolerance.
inline Var rowwise_normalize(Var a) {
  Tape& t = *a.tape;
  Matrix y = comhe::rowwise_normalize(a.value());
  const std::size_t self = t.size();
  return t.record(
      OpKind::rowwise_normalize, {a.id}, std::move(y),
      [ai = a.id, self](const Tape& tp, const Matrix& g) {
        const Matrix& av = tp.value(ai);
        const Matrix& yv = tp.value(self);
        Matrix ga(av.rows(), av.cols());
        for (std::size_t i = 0; i < av.rows(); ++i) {
          const double n = comhe::norm(av.row(i));
          const double yg = comhe::dot(yv.row(i), g.row(i));
          for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) = (g(i, j) - yv(i, j) * yg) / n;
        }
        return std::vector<Matrix>{ga};
      },
      [a, self](Tape& tp, Var g) {
        Var y{&tp, self};
        Var tangential = sub(g, row_scale(y, row_sum(hadamard(y, g))));
        Var inv_norm = power(row_sum(hadamard(a, a)), -0.5);
        return std::vector<Var>{row_scale(tangential, inv_norm)};
      });
}

/// Largest of several 1x1 nodes. Ties go to the lowest index and only the
/// winner receives gradient.
inline Var max(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidArgument("max of an empty list");
  std::size_t winner = 0;
  std::vector<std::size_t> parents;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!xs[i].value().is_scalar()) throw ShapeMismatch("max expects 1x1 inputs");
    if (i > 0) detail::same_tape(xs[0], xs[i]);
    parents.push_back(xs[i].id);
    if (xs[i].value()(0, 0) > xs[winner].value()(0, 0)) winner = i;
  }
  const std::size_t n = xs.size();
  return xs[0].tape->record(
      OpKind::max, std::move(parents), xs[winner].value(),
      [winner, n](const Tape&, const Matrix& g) {
        std::vector<Matrix> out(n, Matrix(1, 1, 0.0));
        out[winner] = g;
        return out;
      },
      [winner, n](Tape& tp, Var g) {
        std::vector<Var> out(n, tp.constant(Matrix(1, 1, 0.0)));
        out[winner] = g;
        return out;
      });
}

inline Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidArgument("add_n of an empty list");
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

/// Row i as a 1 x cols node.
inline Var row_slice(Var a, std::size_t i) {
  const std::size_t r = a.rows(), c = a.cols();
  if (i >= r) throw InvalidArgument("row_slice index out of range");
  return a.tape->record(OpKind::row_slice, {a.id}, comhe::row_block(a.value(), i, i + 1),
                        [r, c, i](const Tape&, const Matrix& g) {
                          Matrix d(r, c);
                          std::copy(g.data().begin(), g.data().end(), d.row(i).begin());
                          return std::vector<Matrix>{d};
                        });
}

inline Var vstack(Var top, Var bottom) {
  detail::same_tape(top, bottom);
  const std::size_t rt = top.rows(), rb = bottom.rows();
  return top.tape->record(OpKind::vstack, {top.id, bottom.id},
                          comhe::vstack(top.value(), bottom.value()),
                          [rt, rb](const Tape&, const Matrix& g) {
                            return std::vector<Matrix>{comhe::row_block(g, 0, rt),
                                                       comhe::row_block(g, rt, rt + rb)};
                          });
}

/// Adds the 1 x cols row vector `b` to every row of `a`.
inline Var add_row(Var a, Var b) {
  detail::same_tape(a, b);
  if (b.rows() != 1 || b.cols() != a.cols()) throw ShapeMismatch("add_row: bias shape");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b.value()(0, j);
  }
  return a.tape->record(OpKind::add_row, {a.id, b.id}, std::move(out),
                        [](const Tape&, const Matrix& g) {
                          Matrix gb(1, g.cols());
                          for (std::size_t i = 0; i < g.rows(); ++i)
                            for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
                          return std::vector<Matrix>{g, gb};
                        });
}

inline Var relu(Var a) {
  return a.tape->record(OpKind::relu, {a.id},
                        detail::map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }),
                        [ai = a.id](const Tape& tp, const Matrix& g) {
                          Matrix d = g;
                          auto x = tp.value(ai).data();
                          auto dd = d.data();
                          for (std::size_t k = 0; k < dd.size(); ++k)
                            if (!(x[k] > 0.0)) dd[k] = 0.0;
                          return std::vector<Matrix>{d};
                        });
}

/// Mean softmax cross-entropy of `logits` (batch x classes) against integer labels.
inline Var softmax_cross_entropy(Var logits, std::vector<std::size_t> labels) {
  const Matrix& z = logits.value();
  if (labels.size() != z.rows()) throw ShapeMismatch("softmax_cross_entropy: label count");
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      probs(i, j) = std::exp(row[j] - m);
      denom += probs(i, j);
    }
    for (double& p : probs.row(i)) p /= denom;
    loss += -(row[labels[i]] - m - std::log(denom));
  }
  const double inv = 1.0 / static_cast<double>(z.rows());
  return logits.tape->record(
      OpKind::softmax_cross_entropy, {logits.id}, Matrix::scalar(loss * inv),
      [probs = std::move(probs), labels = std::move(labels), inv](const Tape&, const Matrix& g) {
        Matrix d = probs;
        for (std::size_t i = 0; i < d.rows(); ++i) d(i, labels[i]) -= 1.0;
        return std::vector<Matrix>{(g(0, 0) * inv) * d};
      });
}

/// Escape hatch for fused ops defined by higher layers.
inline Var custom(std::vector<Var> inputs, Matrix value, NumericVjp vjp) {
  if (inputs.empty()) throw InvalidArgument("custom op needs inputs");
  std::vector<std::size_t> ids;
  for (const Var& v : inputs) {
    detail::same_tape(inputs[0], v);
    ids.push_back(v.id);
  }
  return inputs[0].tape->record(OpKind::custom, std::move(ids), std::move(value), std::move(vjp));
}

// ---- differentiation ---------------------------------------------------------

/// Numeric reverse sweep: d(root)/d(leaf) for every leaf on the tape.
inline Gradient backward(const Tape& tape, Var root) {
  if (!root.value().is_scalar()) {
    throw NonScalarRoot("root is " + root.value().shape_string());
  }
  std::vector<std::optional<Matrix>> adj(root.id + 1);
  adj[root.id] = Matrix::scalar(1.0);
  for (std::size_t id = root.id + 1; id-- > 0;) {
    const Node& n = tape.node(id);
    if (!adj[id] || n.parents.empty() || !n.requires_grad) continue;
    std::vector<Matrix> contribs = n.vjp(tape, *adj[id]);
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      const std::size_t p = n.parents[k];
      if (!tape.node(p).requires_grad) continue;
      if (adj[p]) {
        *adj[p] += contribs[k];
      } else {
        adj[p] = std::move(contribs[k]);
      }
    }
  }
  Gradient out;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    const Node& n = tape.node(id);
    if (n.kind != OpKind::leaf) continue;
    if (id < adj.size() && adj[id]) {
      out.set(id, std::move(*adj[id]));
    } else {
      out.set(id, Matrix(n.value.rows(), n.value.cols()));
    }
  }
  return out;
}

/// Symbolic reverse sweep: returns d(root)/d(wrt[k]) as nodes on the same tape.
/// A subsequent backward() through these nodes yields second-order terms.
inline std::vector<Var> grad(Tape& tape, Var root, const std::vector<Var>& wrt) {
  if (!root.value().is_scalar()) {
    throw NonScalarRoot("root is " + root.value().shape_string());
  }
  std::vector<std::optional<Var>> adj(root.id + 1);
  adj[root.id] = tape.constant(Matrix::scalar(1.0));
  for (std::size_t id = root.id + 1; id-- > 0;) {
    if (!adj[id]) continue;
    const Node& n = tape.node(id);
    if (n.parents.empty() || !n.requires_grad) continue;
    if (!n.symbolic_vjp) {
      throw NotTwiceDifferentiable("op kind " + std::to_string(static_cast<int>(n.kind)) +
                                   " has no symbolic derivative");
    }
    // Copy before recording: new nodes may reallocate the node storage.
    const std::vector<std::size_t> parents = n.parents;
    const SymbolicVjp rule = n.symbolic_vjp;
    std::vector<Var> contribs = rule(tape, *adj[id]);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      const std::size_t p = parents[k];
      if (!tape.node(p).requires_grad) continue;
      adj[p] = adj[p] ? add(*adj[p], contribs[k]) : contribs[k];
    }
  }
  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id < adj.size() && adj[w.id]) {
      out.push_back(*adj[w.id]);
    } else {
      out.push_back(tape.constant(Matrix(w.rows(), w.cols())));
    }
  }
  return out;
}

}  // namespace comhe::ad

#endif  // COMHE_NUMKIT_TAPE_HPP
