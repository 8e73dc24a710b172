#include "ruda/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ruda::ad {

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Neg: return "neg";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Log: return "log";
    case OpKind::Exp: return "exp";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::GradientReversal: return "gradient_reversal";
    case OpKind::Sum: return "sum";
    case OpKind::Clamp: return "clamp";
    case OpKind::RowOuter: return "row_outer";
  }
  return "unknown";
}

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("scalar() on non-scalar node " + shape_string(v));
  }
  return v(0, 0);
}

Var Tape::push(Matrix value, OpKind op, std::vector<std::size_t> parents,
               std::function<void(Tape&, const Node&)> propagate) {
  Node node;
  node.id = nodes_.size();
  node.grad = Matrix::Zero(value.rows(), value.cols());
  node.value = std::move(value);
  node.op = op;
  node.parents = std::move(parents);
  node.propagate = std::move(propagate);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.back().id);
}

Var Tape::leaf(Matrix value) {
  if (!value.allFinite()) {
    throw DomainError("leaf value contains non-finite entries");
  }
  return push(std::move(value), OpKind::Leaf, {}, nullptr);
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.setZero();
}

void Tape::backward(Var loss, BackwardTrace* trace) {
  if (&loss.tape() != this) {
    throw ContractError("backward: loss does not belong to this tape");
  }
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_string(lv));
  }
  zero_grad();
  nodes_[loss.id()].grad(0, 0) = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (trace) trace->visit_order.push_back(i);
    if (n.propagate) n.propagate(*this, n);
  }
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return a.tape();
}

enum class Broadcast { None, BiasRow };

Broadcast binary_broadcast(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::None;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::BiasRow;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                       shape_string(b));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(av) + " * " +
                         shape_string(bv));
  }
  Matrix out = av * bv;
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), OpKind::MatMul, {ia, ib}, [ia, ib](Tape& tp, const Node& n) {
    tp.grad_mut(ia).noalias() += n.grad * tp.value(ib).transpose();
    tp.grad_mut(ib).noalias() += tp.value(ia).transpose() * n.grad;
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Broadcast bc = binary_broadcast(a.value(), b.value(), "add");
  Matrix out = a.value();
  if (bc == Broadcast::None) {
    out += b.value();
  } else {
    out.rowwise() += b.value().row(0);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), OpKind::Add, {ia, ib}, [ia, ib, bc](Tape& tp, const Node& n) {
    tp.grad_mut(ia) += n.grad;
    if (bc == Broadcast::None) {
      tp.grad_mut(ib) += n.grad;
    } else {
      tp.grad_mut(ib) += n.grad.colwise().sum();
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  const Broadcast bc = binary_broadcast(a.value(), b.value(), "sub");
  Matrix out = a.value();
  if (bc == Broadcast::None) {
    out -= b.value();
  } else {
    out.rowwise() -= b.value().row(0);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), OpKind::Sub, {ia, ib}, [ia, ib, bc](Tape& tp, const Node& n) {
    tp.grad_mut(ia) += n.grad;
    if (bc == Broadcast::None) {
      tp.grad_mut(ib) -= n.grad;
    } else {
      tp.grad_mut(ib) -= n.grad.colwise().sum();
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const Broadcast bc = binary_broadcast(a.value(), b.value(), "mul");
  Matrix out;
  if (bc == Broadcast::None) {
    out = a.value().cwiseProduct(b.value());
  } else {
    out = a.value().array().rowwise() * b.value().row(0).array();
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), OpKind::Mul, {ia, ib}, [ia, ib, bc](Tape& tp, const Node& n) {
    if (bc == Broadcast::None) {
      tp.grad_mut(ia) += n.grad.cwiseProduct(tp.value(ib));
      tp.grad_mut(ib) += n.grad.cwiseProduct(tp.value(ia));
    } else {
      Matrix ga = n.grad.array().rowwise() * tp.value(ib).row(0).array();
      tp.grad_mut(ia) += ga;
      tp.grad_mut(ib) += n.grad.cwiseProduct(tp.value(ia)).colwise().sum();
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  Tape& t = a.tape();
  Matrix out = a.value() * factor;
  const std::size_t ia = a.id();
  return t.push(std::move(out), OpKind::Scale, {ia}, [ia, factor](Tape& tp, const Node& n) {
    tp.grad_mut(ia) += factor * n.grad;
  });
}

Var add_scalar(Var a, double offset) {
  Tape& t = a.tape();
  Matrix out = a.value().array() + offset;
  const std::size_t ia = a.id();
  return t.push(std::move(out), OpKind::AddScalar, {ia},
                [ia](Tape& tp, const Node& n) { tp.grad_mut(ia) += n.grad; });
}

Var log(Var a) {
  Tape& t = a.tape();
  const Matrix& av = a.value();
  if ((av.array() <= 0.0).any()) {
    throw DomainError("log: input has non-positive entries");
  }
  Matrix out = av.array().log();
  const std::size_t ia = a.id();
  return t.push(std::move(out), OpKind::Log, {ia}, [ia](Tape& tp, const Node& n) {
    tp.grad_mut(ia).array() += n.grad.array() / tp.value(ia).array();
  });
}

Var exp(Var a) {
  Tape& t = a.tape();
  Matrix out = a.value().array().exp();
  if (!out.allFinite()) {
    throw DomainError("exp: result overflows");
  }
  const std::size_t ia = a.id();
  return t.push(std::move(out), OpKind::Exp, {ia}, [ia](Tape& tp, const Node& n) {
    tp.grad_mut(ia).array() += n.grad.array() * n.value.array();
  });
}

Var relu(Var a) {
  Tape& t = a.tape();
  Matrix out = a.value().cwiseMax(0.0);
  const std::size_t ia = a.id();
  return t.push(std::move(out), OpKind::Relu, {ia}, [ia](Tape& tp, const Node& n) {
    tp.grad_mut(ia).array() += (tp.value(ia).array() > 0.0).select(n.grad.array(), 0.0);
  });
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var a) {
  Tape& t = a.tape();
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  const std::size_t ia = a.id();
  return t.push(std::move(out), OpKind::Sigmoid, {ia}, [ia](Tape& tp, const Node& n) {
    tp.grad_mut(ia).array() += n.grad.array() * n.value.array() * (1.0 - n.value.array());
  });
}

Var softmax_rows(Var logits) {
  Tape& t = logits.tape();
  const Matrix& x = logits.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double shift = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - shift).exp();
    out.row(i) /= out.row(i).sum();
  }
  const std::size_t ia = logits.id();
  return t.push(std::move(out), OpKind::SoftmaxRows, {ia}, [ia](Tape& tp, const Node& n) {
    const Matrix& y = n.value;
    const Vector inner = n.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = n.grad;
    g.colwise() -= inner;
    tp.grad_mut(ia) += g.cwiseProduct(y);
  });
}

Var gradient_reversal(Var x, double strength) {
  if (!(strength >= 0.0)) {
    throw ContractError("gradient_reversal: strength must be >= 0");
  }
  Tape& t = x.tape();
  Matrix out = x.value();
  const std::size_t ia = x.id();
  return t.push(std::move(out), OpKind::GradientReversal, {ia},
                [ia, strength](Tape& tp, const Node& n) { tp.grad_mut(ia) -= strength * n.grad; });
}

Var sum(Var a) {
  Tape& t = a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const std::size_t ia = a.id();
  return t.push(std::move(out), OpKind::Sum, {ia}, [ia](Tape& tp, const Node& n) {
    tp.grad_mut(ia).array() += n.grad(0, 0);
  });
}

Var mean(Var a) {
  const auto count = static_cast<double>(a.value().size());
  if (count == 0) throw ContractError("mean of an empty node");
  return scale(sum(a), 1.0 / count);
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  Tape& t = a.tape();
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  const std::size_t ia = a.id();
  return t.push(std::move(out), OpKind::Clamp, {ia}, [ia, lo, hi](Tape& tp, const Node& n) {
    const auto& x = tp.value(ia).array();
    tp.grad_mut(ia).array() += ((x >= lo) && (x <= hi)).select(n.grad.array(), 0.0);
  });
}

Var row_outer(Var g, Var z) {
  Tape& t = same_tape(g, z, "row_outer");
  const Matrix& gv = g.value();
  const Matrix& zv = z.value();
  if (gv.rows() != zv.rows()) {
    throw DimensionError("row_outer: row counts differ " + shape_string(gv) + " vs " +
                         shape_string(zv));
  }
  const Eigen::Index n = gv.rows(), c = gv.cols(), r = zv.cols();
  Matrix out(n, c * r);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < c; ++k) {
      out.block(i, k * r, 1, r) = gv(i, k) * zv.row(i);
    }
  }
  const std::size_t ig = g.id(), iz = z.id();
  return t.push(std::move(out), OpKind::RowOuter, {ig, iz},
                [ig, iz, c, r](Tape& tp, const Node& node) {
                  const Matrix& gval = tp.value(ig);
                  const Matrix& zval = tp.value(iz);
                  Matrix dg = Matrix::Zero(gval.rows(), c);
                  Matrix dz = Matrix::Zero(zval.rows(), r);
                  for (Eigen::Index i = 0; i < gval.rows(); ++i) {
                    for (Eigen::Index k = 0; k < c; ++k) {
                      const auto block = node.grad.row(i).segment(k * r, r);
                      dg(i, k) = block.dot(zval.row(i));
                      dz.row(i) += gval(i, k) * block;
                    }
                  }
                  tp.grad_mut(ig) += dg;
                  tp.grad_mut(iz) += dz;
                });
}

}  // namespace ruda::ad
