#pragma once

#include <string>
#include <vector>

#include "gpdrf/tape.hpp"

namespace gpdrf::opt {

using diff::Matrix;

// A trainable parameter the optimizer updates in place. The name shows up in
// divergence errors and checkpoints, so keep it stable across runs.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
};

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One bias-corrected update. `grads` must be parallel to `params`; moment
  // accumulators are allocated on the first call and their shapes are pinned
  // from then on. Throws DivergenceError when a gradient contains NaN/Inf.
  void step(const std::vector<ParamRef>& params, const std::vector<Matrix>& grads);

  long long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

// coefficient * sum of squared entries over all leaves, recorded on the tape.
// Negative coefficient is a configuration error; zero skips the whole sum.
diff::Var l2_penalty(diff::Tape& tape, const std::vector<diff::Var>& leaves,
                     double coefficient);

}  // namespace gpdrf::opt
