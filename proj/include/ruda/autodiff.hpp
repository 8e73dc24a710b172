#pragma once

// Reverse-mode automatic differentiation over dense float64 matrices.
//
// A Tape records every value produced during a forward pass together with a
// closure that distributes the node's gradient onto its parents. Node ids are
// assigned monotonically, so parents always precede their consumers and a
// single reverse sweep over ids is a valid topological order.

#include "ruda/errors.hpp"
#include "ruda/tensor.hpp"

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

namespace ruda::ad {

enum class OpKind {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Neg,
  Scale,
  AddScalar,
  Log,
  Exp,
  Relu,
  Sigmoid,
  SoftmaxRows,
  GradientReversal,
  Sum,
  Clamp,
  RowOuter,
};

std::string_view op_name(OpKind op);

class Tape;

/// Lightweight handle to a node on a tape. Copyable; does not own anything.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct Node {
  std::size_t id = 0;
  Matrix value;
  Matrix grad;
  OpKind op = OpKind::Leaf;
  std::vector<std::size_t> parents;
  // Adds this node's gradient into the gradients of its parents.
  std::function<void(Tape&, const Node&)> propagate;
};

/// Order in which backward() visited nodes, for instrumentation.
struct BackwardTrace {
  std::vector<std::size_t> visit_order;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Records an input or parameter. Throws DomainError on non-finite entries.
  Var leaf(Matrix value);

  /// Reverse sweep from a scalar loss. Gradients of all nodes are reset to
  /// zero, the loss is seeded with 1, and contributions accumulate additively
  /// across fan-out. Throws ContractError if the loss is not 1x1.
  void backward(Var loss, BackwardTrace* trace = nullptr);

  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  Matrix& grad_mut(std::size_t id) { return nodes_[id].grad; }

  /// Appends a node computed by an operation. Used by the op implementations.
  Var push(Matrix value, OpKind op, std::vector<std::size_t> parents,
           std::function<void(Tape&, const Node&)> propagate);

 private:
  std::vector<Node> nodes_;
};

// Differentiable operations. Every operand must live on the same tape.

/// Matrix product [m x k] * [k x n].
Var matmul(Var a, Var b);
/// Sum of equal shapes, or a [m x n] plus a [1 x n] bias row.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise (Hadamard) product of equal shapes, or row-bias broadcast.
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// Natural log; throws DomainError unless every entry is strictly positive.
Var log(Var a);
/// Throws DomainError if any result overflows.
Var exp(Var a);
Var relu(Var a);
Var sigmoid(Var a);
/// Row-wise softmax with max-shift stabilisation.
Var softmax_rows(Var logits);
/// Identity forward; backward multiplies the incoming gradient by -strength.
Var gradient_reversal(Var x, double strength);
/// Sum of all entries, as a 1x1 node.
Var sum(Var a);
Var mean(Var a);
/// Clamp into [lo, hi]; gradient passes only where the input was inside.
Var clamp(Var a, double lo, double hi);
/// Row i of the result is the flattened outer product g_i (x) z_i, laid out
/// as C blocks of width r.
Var row_outer(Var g, Var z);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator+(double s, Var a) { return add_scalar(a, s); }
inline Var operator-(double s, Var a) { return add_scalar(neg(a), s); }

}  // namespace ruda::ad
