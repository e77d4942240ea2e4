#include "gpdrf/tape.hpp"

#include <cmath>
#include <string>

#include "gpdrf/errors.hpp"

namespace gpdrf::diff {

const Matrix& Var::value() const {
  return tape->node(index).value;
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("Var::scalar: node is " + std::to_string(v.rows()) + "x" +
                     std::to_string(v.cols()) + ", expected 1x1");
  }
  return v(0, 0);
}

Var emit(Tape& t, Node&& n) {
  for (int in : n.inputs) {
    if (t.nodes_[static_cast<std::size_t>(in)].needs_grad) {
      n.needs_grad = true;
      break;
    }
  }
  t.nodes_.push_back(std::move(n));
  return Var{&t, static_cast<int>(t.nodes_.size()) - 1};
}

Var Tape::leaf(const Matrix& value) {
  Node n;
  n.op = Op::leaf;
  n.value = value;
  nodes_.push_back(std::move(n));
  nodes_.back().needs_grad = true;
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(const Matrix& value) {
  Node n;
  n.op = Op::constant;
  n.value = value;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant_scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(m);
}

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) {
    throw InvalidArgumentError(std::string(op) + ": operands from different tapes");
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()));
  }
}

Var binary(Op op, Var a, Var b, const char* name) {
  require_same_tape(a, b, name);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  require_same_shape(va, vb, name);
  Node n;
  n.op = op;
  n.inputs = {a.index, b.index};
  switch (op) {
    case Op::add: n.value = va + vb; break;
    case Op::sub: n.value = va - vb; break;
    case Op::mul: n.value = va.cwiseProduct(vb); break;
    case Op::div: n.value = va.cwiseQuotient(vb); break;
    default: throw InvalidArgumentError("binary: bad op");
  }
  return emit(*a.tape, std::move(n));
}

Var unary(Op op, Var a) {
  const Matrix& v = a.value();
  Node n;
  n.op = op;
  n.inputs = {a.index};
  switch (op) {
    case Op::neg: n.value = -v; break;
    case Op::exp_fn: n.value = v.array().exp(); break;
    case Op::log_fn: n.value = v.array().log(); break;
    case Op::cos_fn: n.value = v.array().cos(); break;
    case Op::sin_fn: n.value = v.array().sin(); break;
    case Op::sqrt_fn: n.value = v.array().sqrt(); break;
    case Op::square: n.value = v.array().square(); break;
    default: throw InvalidArgumentError("unary: bad op");
  }
  return emit(*a.tape, std::move(n));
}

}  // namespace

Var add(Var a, Var b) { return binary(Op::add, a, b, "add"); }
Var sub(Var a, Var b) { return binary(Op::sub, a, b, "sub"); }
Var mul(Var a, Var b) { return binary(Op::mul, a, b, "mul"); }
Var div(Var a, Var b) { return binary(Op::div, a, b, "div"); }
Var neg(Var a) { return unary(Op::neg, a); }
Var exp(Var a) { return unary(Op::exp_fn, a); }
Var log(Var a) { return unary(Op::log_fn, a); }
Var cos(Var a) { return unary(Op::cos_fn, a); }
Var sin(Var a) { return unary(Op::sin_fn, a); }
Var sqrt(Var a) { return unary(Op::sqrt_fn, a); }
Var square(Var a) { return unary(Op::square, a); }

Var scale(Var a, double c) {
  Node n;
  n.op = Op::scale;
  n.inputs = {a.index};
  n.c = c;
  n.value = c * a.value();
  return emit(*a.tape, std::move(n));
}

Var shift(Var a, double c) {
  Node n;
  n.op = Op::shift;
  n.inputs = {a.index};
  n.c = c;
  n.value = a.value().array() + c;
  return emit(*a.tape, std::move(n));
}

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
  require_same_tape(a, b, "matmul");
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const Eigen::Index inner_a = trans_a ? va.rows() : va.cols();
  const Eigen::Index inner_b = trans_b ? vb.cols() : vb.rows();
  if (inner_a != inner_b) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(inner_a) + " vs " +
                     std::to_string(inner_b));
  }
  Node n;
  n.op = Op::matmul;
  n.inputs = {a.index, b.index};
  n.trans0 = trans_a;
  n.trans1 = trans_b;
  if (!trans_a && !trans_b) n.value = va * vb;
  else if (trans_a && !trans_b) n.value = va.transpose() * vb;
  else if (!trans_a && trans_b) n.value = va * vb.transpose();
  else n.value = va.transpose() * vb.transpose();
  return emit(*a.tape, std::move(n));
}

Var sum(Var a) {
  Node n;
  n.op = Op::sum;
  n.inputs = {a.index};
  n.value = Matrix::Constant(1, 1, a.value().sum());
  return emit(*a.tape, std::move(n));
}

Var colwise_sum(Var a) {
  Node n;
  n.op = Op::colwise_sum;
  n.inputs = {a.index};
  n.value = a.value().colwise().sum();
  return emit(*a.tape, std::move(n));
}

Var rowwise_sum(Var a) {
  Node n;
  n.op = Op::rowwise_sum;
  n.inputs = {a.index};
  n.value = a.value().rowwise().sum();
  return emit(*a.tape, std::move(n));
}

Var trace(Var a) {
  const Matrix& v = a.value();
  if (v.rows() != v.cols()) throw ShapeError("trace: matrix not square");
  Node n;
  n.op = Op::trace;
  n.inputs = {a.index};
  n.value = Matrix::Constant(1, 1, v.trace());
  return emit(*a.tape, std::move(n));
}

Var bcast_scalar(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (a.value().size() != 1) throw ShapeError("bcast_scalar: input not 1x1");
  Node n;
  n.op = Op::bcast_scalar;
  n.inputs = {a.index};
  n.value = Matrix::Constant(rows, cols, a.value()(0, 0));
  return emit(*a.tape, std::move(n));
}

Var bcast_col(Var a, Eigen::Index cols) {
  const Matrix& v = a.value();
  if (v.cols() != 1) throw ShapeError("bcast_col: input not a column vector");
  Node n;
  n.op = Op::bcast_col;
  n.inputs = {a.index};
  n.value = v.replicate(1, cols);
  return emit(*a.tape, std::move(n));
}

Var bcast_row(Var a, Eigen::Index rows) {
  const Matrix& v = a.value();
  if (v.rows() != 1) throw ShapeError("bcast_row: input not a row vector");
  Node n;
  n.op = Op::bcast_row;
  n.inputs = {a.index};
  n.value = v.replicate(rows, 1);
  return emit(*a.tape, std::move(n));
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& v = a.value();
  if (v.size() != rows * cols) {
    throw ShapeError("reshape: size " + std::to_string(v.size()) + " != " +
                     std::to_string(rows * cols));
  }
  Node n;
  n.op = Op::reshape;
  n.inputs = {a.index};
  n.value = Eigen::Map<const Matrix>(v.data(), rows, cols);
  return emit(*a.tape, std::move(n));
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgumentError("vstack: no inputs");
  Tape* t = parts.front().tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().value().cols();
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "vstack");
    if (p.value().cols() != cols) throw ShapeError("vstack: column count mismatch");
    rows += p.value().rows();
  }
  Node n;
  n.op = Op::vstack;
  n.value.resize(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    n.inputs.push_back(p.index);
    n.value.middleRows(r, p.value().rows()) = p.value();
    r += p.value().rows();
  }
  return emit(*t, std::move(n));
}

Var interleave_rows(Var a, Var b) {
  require_same_tape(a, b, "interleave_rows");
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  require_same_shape(va, vb, "interleave_rows");
  Node n;
  n.op = Op::interleave_rows;
  n.inputs = {a.index, b.index};
  n.value.resize(2 * va.rows(), va.cols());
  for (Eigen::Index i = 0; i < va.rows(); ++i) {
    n.value.row(2 * i) = va.row(i);
    n.value.row(2 * i + 1) = vb.row(i);
  }
  return emit(*a.tape, std::move(n));
}

Var gather_cols(Var a, const std::vector<int>& row_per_col) {
  const Matrix& v = a.value();
  if (static_cast<Eigen::Index>(row_per_col.size()) != v.cols()) {
    throw ShapeError("gather_cols: index count != column count");
  }
  Node n;
  n.op = Op::gather_cols;
  n.inputs = {a.index};
  n.idx = row_per_col;
  n.value.resize(1, v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const int r = row_per_col[static_cast<std::size_t>(j)];
    if (r < 0 || r >= v.rows()) {
      throw InvalidArgumentError("gather_cols: row index " + std::to_string(r) +
                                 " out of range for " + std::to_string(v.rows()) + " rows");
    }
    n.value(0, j) = v(r, j);
  }
  return emit(*a.tape, std::move(n));
}

Var logsumexp_cols(Var a) {
  const Matrix& v = a.value();
  Node n;
  n.op = Op::logsumexp_cols;
  n.inputs = {a.index};
  n.value.resize(1, v.cols());
  n.aux.resize(v.rows(), v.cols());  // softmax, reused in backward
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const double m = v.col(j).maxCoeff();
    const Eigen::ArrayXd e = (v.col(j).array() - m).exp();
    const double s = e.sum();
    n.value(0, j) = m + std::log(s);
    n.aux.col(j) = (e / s).matrix();
  }
  return emit(*a.tape, std::move(n));
}

Var diag_of(Var a) {
  const Matrix& v = a.value();
  if (v.rows() != v.cols()) throw ShapeError("diag_of: matrix not square");
  Node n;
  n.op = Op::diag_of;
  n.inputs = {a.index};
  n.value = v.diagonal();
  return emit(*a.tape, std::move(n));
}

Var diag_from_vec(Var a) {
  const Matrix& v = a.value();
  if (v.cols() != 1) throw ShapeError("diag_from_vec: input not a column vector");
  Node n;
  n.op = Op::diag_from_vec;
  n.inputs = {a.index};
  n.value = Matrix(v.col(0).asDiagonal());
  return emit(*a.tape, std::move(n));
}

Var clamped_sqrt(Var a, const Matrix& tolerance) {
  const Matrix& v = a.value();
  require_same_shape(v, tolerance, "clamped_sqrt");
  Node n;
  n.op = Op::clamped_sqrt;
  n.inputs = {a.index};
  n.aux = tolerance;
  n.value.resize(v.rows(), v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double x = v(i, j);
      if (x < -tolerance(i, j)) {
        throw NotPositiveDefiniteError(
            "clamped_sqrt: variance " + std::to_string(x) + " at (" + std::to_string(i) +
            "," + std::to_string(j) + ") below the round-off floor " +
            std::to_string(-tolerance(i, j)));
      }
      n.value(i, j) = x > 0.0 ? std::sqrt(x) : 0.0;
    }
  }
  return emit(*a.tape, std::move(n));
}

std::shared_ptr<Eigen::LLT<Matrix>> Tape::psd_factor_of(int index, const char* op) {
  if (llt_cache_.size() < nodes_.size()) llt_cache_.resize(nodes_.size());
  auto& slot = llt_cache_[static_cast<std::size_t>(index)];
  if (slot) return slot;
  const Matrix& k = nodes_[static_cast<std::size_t>(index)].value;
  if (k.rows() != k.cols()) throw ShapeError(std::string(op) + ": matrix not square");
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(k);
  if (llt->info() != Eigen::Success) {
    throw NotPositiveDefiniteError(std::string(op) +
                                   ": Cholesky failed; matrix is not positive definite "
                                   "(consider a larger jitter)");
  }
  slot = llt;
  return llt;
}

Var chol_solve(Var k, Var b) {
  require_same_tape(k, b, "chol_solve");
  const Matrix& vk = k.value();
  const Matrix& vb = b.value();
  if (vk.cols() != vb.rows()) throw ShapeError("chol_solve: dimension mismatch");
  Node n;
  n.op = Op::chol_solve;
  n.inputs = {k.index, b.index};
  n.llt = k.tape->psd_factor_of(k.index, "chol_solve");
  n.value = n.llt->solve(vb);
  return emit(*k.tape, std::move(n));
}

Var logdet_psd(Var k) {
  Node n;
  n.op = Op::logdet_psd;
  n.inputs = {k.index};
  n.llt = k.tape->psd_factor_of(k.index, "logdet_psd");
  n.value = Matrix::Constant(
      1, 1, 2.0 * n.llt->matrixLLT().diagonal().array().log().sum());
  return emit(*k.tape, std::move(n));
}

// ---- backward ---------------------------------------------------------------

namespace {

inline Matrix& grad_buf(Node& n) {
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

}  // namespace

void Tape::backward(Var output) {
  if (output.tape != this) throw InvalidArgumentError("backward: foreign node");
  Node& out = nodes_[static_cast<std::size_t>(output.index)];
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw InvalidArgumentError("backward: output must be a 1x1 scalar, got " +
                               std::to_string(out.value.rows()) + "x" +
                               std::to_string(out.value.cols()));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  grad_buf(out)(0, 0) = 1.0;

  for (int i = output.index; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Matrix& g = n.grad;
    auto in = [&](int slot) -> Node& {
      return nodes_[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(slot)])];
    };
    auto wants = [&](int slot) { return in(slot).needs_grad; };

    switch (n.op) {
      case Op::leaf:
      case Op::constant:
        break;
      case Op::add:
        if (wants(0)) grad_buf(in(0)) += g;
        if (wants(1)) grad_buf(in(1)) += g;
        break;
      case Op::sub:
        if (wants(0)) grad_buf(in(0)) += g;
        if (wants(1)) grad_buf(in(1)) -= g;
        break;
      case Op::mul:
        if (wants(0)) grad_buf(in(0)) += g.cwiseProduct(in(1).value);
        if (wants(1)) grad_buf(in(1)) += g.cwiseProduct(in(0).value);
        break;
      case Op::div:
        if (wants(0)) grad_buf(in(0)) += g.cwiseQuotient(in(1).value);
        if (wants(1))
          grad_buf(in(1)) -= g.cwiseProduct(n.value).cwiseQuotient(in(1).value);
        break;
      case Op::neg:
        if (wants(0)) grad_buf(in(0)) -= g;
        break;
      case Op::exp_fn:
        if (wants(0)) grad_buf(in(0)) += g.cwiseProduct(n.value);
        break;
      case Op::log_fn:
        if (wants(0)) grad_buf(in(0)) += g.cwiseQuotient(in(0).value);
        break;
      case Op::cos_fn:
        if (wants(0))
          grad_buf(in(0)) -= g.cwiseProduct(Matrix(in(0).value.array().sin()));
        break;
      case Op::sin_fn:
        if (wants(0))
          grad_buf(in(0)) += g.cwiseProduct(Matrix(in(0).value.array().cos()));
        break;
      case Op::sqrt_fn:
        if (wants(0))
          grad_buf(in(0)) += 0.5 * g.cwiseQuotient(n.value);
        break;
      case Op::square:
        if (wants(0)) grad_buf(in(0)) += 2.0 * g.cwiseProduct(in(0).value);
        break;
      case Op::scale:
        if (wants(0)) grad_buf(in(0)) += n.c * g;
        break;
      case Op::shift:
        if (wants(0)) grad_buf(in(0)) += g;
        break;
      case Op::matmul: {
        const Matrix& a = in(0).value;
        const Matrix& b = in(1).value;
        if (!n.trans0 && !n.trans1) {
          if (wants(0)) grad_buf(in(0)) += g * b.transpose();
          if (wants(1)) grad_buf(in(1)) += a.transpose() * g;
        } else if (n.trans0 && !n.trans1) {
          if (wants(0)) grad_buf(in(0)) += b * g.transpose();
          if (wants(1)) grad_buf(in(1)) += a * g;
        } else if (!n.trans0 && n.trans1) {
          if (wants(0)) grad_buf(in(0)) += g * b;
          if (wants(1)) grad_buf(in(1)) += g.transpose() * a;
        } else {
          if (wants(0)) grad_buf(in(0)) += b.transpose() * g.transpose();
          if (wants(1)) grad_buf(in(1)) += g.transpose() * a.transpose();
        }
        break;
      }
      case Op::sum:
        if (wants(0))
          grad_buf(in(0)).array() += g(0, 0);
        break;
      case Op::colwise_sum:
        if (wants(0)) grad_buf(in(0)) += g.replicate(in(0).value.rows(), 1);
        break;
      case Op::rowwise_sum:
        if (wants(0)) grad_buf(in(0)) += g.replicate(1, in(0).value.cols());
        break;
      case Op::trace:
        if (wants(0))
          grad_buf(in(0)) += g(0, 0) * Matrix::Identity(in(0).value.rows(),
                                                        in(0).value.cols());
        break;
      case Op::bcast_scalar:
        if (wants(0)) grad_buf(in(0))(0, 0) += g.sum();
        break;
      case Op::bcast_col:
        if (wants(0)) grad_buf(in(0)) += g.rowwise().sum();
        break;
      case Op::bcast_row:
        if (wants(0)) grad_buf(in(0)) += g.colwise().sum();
        break;
      case Op::reshape:
        if (wants(0)) {
          Node& a = in(0);
          grad_buf(a) +=
              Eigen::Map<const Matrix>(g.data(), a.value.rows(), a.value.cols());
        }
        break;
      case Op::vstack: {
        Eigen::Index r = 0;
        for (std::size_t s = 0; s < n.inputs.size(); ++s) {
          Node& a = nodes_[static_cast<std::size_t>(n.inputs[s])];
          if (a.needs_grad) grad_buf(a) += g.middleRows(r, a.value.rows());
          r += a.value.rows();
        }
        break;
      }
      case Op::interleave_rows: {
        const Eigen::Index half = in(0).value.rows();
        for (Eigen::Index r = 0; r < half; ++r) {
          if (wants(0)) grad_buf(in(0)).row(r) += g.row(2 * r);
          if (wants(1)) grad_buf(in(1)).row(r) += g.row(2 * r + 1);
        }
        break;
      }
      case Op::gather_cols:
        if (wants(0)) {
          Matrix& ga = grad_buf(in(0));
          for (Eigen::Index j = 0; j < g.cols(); ++j) {
            ga(n.idx[static_cast<std::size_t>(j)], j) += g(0, j);
          }
        }
        break;
      case Op::logsumexp_cols:
        if (wants(0))
          grad_buf(in(0)) += n.aux.cwiseProduct(g.replicate(n.aux.rows(), 1));
        break;
      case Op::diag_of:
        if (wants(0)) grad_buf(in(0)).diagonal() += g.col(0);
        break;
      case Op::diag_from_vec:
        if (wants(0)) grad_buf(in(0)).col(0) += g.diagonal();
        break;
      case Op::clamped_sqrt:
        if (wants(0)) {
          Matrix& ga = grad_buf(in(0));
          const Matrix& x = in(0).value;
          for (Eigen::Index j = 0; j < g.cols(); ++j) {
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
              if (x(r, j) > 0.0) ga(r, j) += 0.5 * g(r, j) / n.value(r, j);
            }
          }
        }
        break;
      case Op::chol_solve: {
        const Matrix gb = n.llt->solve(g);
        if (wants(1)) grad_buf(in(1)) += gb;
        if (wants(0)) grad_buf(in(0)) -= gb * n.value.transpose();
        break;
      }
      case Op::logdet_psd:
        if (wants(0)) {
          const Eigen::Index m = in(0).value.rows();
          grad_buf(in(0)) += g(0, 0) * n.llt->solve(Matrix::Identity(m, m));
        }
        break;
    }
  }
}

Matrix Tape::gradient(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.index)];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

}  // namespace gpdrf::diff
