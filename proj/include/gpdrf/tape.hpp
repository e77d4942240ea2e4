#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

namespace gpdrf::diff {

using Matrix = Eigen::MatrixXd;

// Recorded primitive operations. The tape is rebuilt for every objective
// evaluation, so the set stays minimal: exactly what the model's ELBO and
// its regularizer need.
enum class Op : std::uint8_t {
  leaf,      // trainable input
  constant,  // data / noise, no gradient
  add,
  sub,
  mul,   // elementwise
  div,   // elementwise
  neg,
  exp_fn,
  log_fn,
  cos_fn,
  sin_fn,
  sqrt_fn,
  square,
  scale,           // c * x
  shift,           // x + c
  matmul,          // optional transposes on either side
  sum,             // all entries -> 1x1
  colwise_sum,     // -> 1 x C
  rowwise_sum,     // -> R x 1
  trace,           // square -> 1x1
  bcast_scalar,    // 1x1 -> R x C
  bcast_col,       // R x 1 -> R x C
  bcast_row,       // 1 x C -> R x C
  reshape,         // column-major reindex
  vstack,          // n-ary row concatenation
  interleave_rows, // (A, B) -> rows A0,B0,A1,B1,...
  gather_cols,     // pick one row entry per column -> 1 x C
  logsumexp_cols,  // K x C -> 1 x C, max-shifted
  diag_of,         // N x N -> N x 1
  diag_from_vec,   // N x 1 -> N x N
  clamped_sqrt,    // sqrt(max(x,0)) with a tolerance check on negatives
  chol_solve,      // (K, B) -> K^{-1} B via Cholesky of K
  logdet_psd,      // K -> 1x1 via Cholesky
};

class Tape;

// Cheap handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int index = -1;

  bool valid() const { return tape != nullptr && index >= 0; }
  const Matrix& value() const;
  double scalar() const;  // value()(0,0); requires 1x1
};

struct Node {
  Op op = Op::constant;
  std::vector<int> inputs;
  Matrix value;
  Matrix grad;       // allocated during backward
  bool needs_grad = false;

  // per-op payload
  double c = 0.0;                 // scale/shift constant
  bool trans0 = false, trans1 = false;  // matmul
  std::vector<int> idx;           // gather_cols column indices
  Matrix aux;                     // cached softmax / clamp tolerances
  std::shared_ptr<Eigen::LLT<Matrix>> llt;  // cached factor for solve/logdet
};

class Tape {
 public:
  Var leaf(const Matrix& value);
  Var constant(const Matrix& value);
  Var constant_scalar(double value);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  // Reverse pass from a 1x1 output. Throws if `output` is not scalar.
  void backward(Var output);

  // Gradient of the last backward() output w.r.t. `v`. Leaves that the
  // output does not reach get an all-zero gradient of the leaf's shape.
  Matrix gradient(Var v) const;

  // Cholesky of node `index`'s value, computed once per node. Several solves
  // against the same Gram matrix are common; node values never change, so
  // the factor can be shared.
  std::shared_ptr<Eigen::LLT<Matrix>> psd_factor_of(int index, const char* op);

 private:
  friend Var emit(Tape& t, Node&& n);
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<Eigen::LLT<Matrix>>> llt_cache_;
};

// ---- op builders -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var cos(Var a);
Var sin(Var a);
Var sqrt(Var a);
Var square(Var a);
Var scale(Var a, double c);
Var shift(Var a, double c);
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var sum(Var a);
Var colwise_sum(Var a);
Var rowwise_sum(Var a);
Var trace(Var a);
Var bcast_scalar(Var a, Eigen::Index rows, Eigen::Index cols);
Var bcast_col(Var a, Eigen::Index cols);
Var bcast_row(Var a, Eigen::Index rows);
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
Var vstack(const std::vector<Var>& parts);
Var interleave_rows(Var a, Var b);
Var gather_cols(Var a, const std::vector<int>& row_per_col);
Var logsumexp_cols(Var a);
Var diag_of(Var a);
Var diag_from_vec(Var a);
// sqrt(max(x,0)); entries below -tolerance(i,j) raise a contract error,
// clamped entries propagate zero gradient.
Var clamped_sqrt(Var a, const Matrix& tolerance);
Var chol_solve(Var k, Var b);
Var logdet_psd(Var k);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

// Elementwise dot: sum(a .* b).
inline Var dot(Var a, Var b) { return sum(mul(a, b)); }

}  // namespace gpdrf::diff
