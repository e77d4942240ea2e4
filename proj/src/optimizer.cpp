#include "gpdrf/optimizer.hpp"

#include <cmath>

#include "gpdrf/errors.hpp"

namespace gpdrf::opt {

void AdamOptimizer::step(const std::vector<ParamRef>& params,
                         const std::vector<Matrix>& grads) {
  if (params.size() != grads.size()) {
    throw InvalidArgumentError("adam: " + std::to_string(params.size()) +
                               " params but " + std::to_string(grads.size()) +
                               " gradients");
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = Matrix::Zero(params[i].value->rows(), params[i].value->cols());
      v_[i] = m_[i];
    }
  } else if (m_.size() != params.size()) {
    throw InvalidArgumentError("adam: parameter count changed mid-run");
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    Matrix& p = *params[i].value;
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw ShapeError("adam: gradient shape mismatch for " + params[i].name);
    }
    if (!g.allFinite()) {
      throw DivergenceError("adam: non-finite gradient for " + params[i].name +
                            " at step " + std::to_string(t_));
    }
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = m_[i] / bc1;
    const Matrix v_hat = v_[i] / bc2;
    p.array() -= cfg_.learning_rate * m_hat.array() /
                 (v_hat.array().sqrt() + cfg_.epsilon);
  }
}

diff::Var l2_penalty(diff::Tape& tape, const std::vector<diff::Var>& leaves,
                     double coefficient) {
  if (coefficient < 0.0) {
    throw ConfigError("l2 coefficient must be non-negative, got " +
                      std::to_string(coefficient));
  }
  if (coefficient == 0.0 || leaves.empty()) return tape.constant_scalar(0.0);
  diff::Var total = sum(square(leaves.front()));
  for (std::size_t i = 1; i < leaves.size(); ++i) {
    total = total + sum(square(leaves[i]));
  }
  return scale(total, coefficient);
}

}  // namespace gpdrf::opt
