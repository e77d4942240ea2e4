#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "gpdrf/tape.hpp"

namespace gpdrf::lik {

enum class Kind { gaussian, softmax };

// Terminal model tying network outputs to targets. Gaussian reads a single
// output as the mean with trainable noise variance; softmax reads K outputs
// as logits with no parameters of its own.
struct LikelihoodSpec {
  Kind kind = Kind::gaussian;
  double log_noise_var = 0.0;  // gaussian only
  int classes = 0;             // softmax only

  Eigen::Index output_dim() const {
    return kind == Kind::gaussian ? 1 : classes;
  }
  double noise_var() const { return std::exp(log_noise_var); }
};

void validate(const LikelihoodSpec& spec);

// Targets are stored as doubles throughout; classification targets must be
// exact non-negative integers below the class count.
int class_index(double target, const LikelihoodSpec& spec);

double log_likelihood(double target, const Eigen::VectorXd& g,
                      const LikelihoodSpec& spec);

double sample_target(const Eigen::VectorXd& g, const LikelihoodSpec& spec,
                     std::uint64_t seed,
                     std::initializer_list<std::uint64_t> words);

// Batched tape versions: g holds one example per column, the result is a
// 1 x B row of per-example log densities.
diff::Var gaussian_loglik_tape(diff::Tape& tape, const std::vector<double>& targets,
                               diff::Var g, diff::Var log_noise_var);
diff::Var softmax_loglik_tape(diff::Tape& tape, const std::vector<double>& targets,
                              diff::Var logits, const LikelihoodSpec& spec);

}  // namespace gpdrf::lik
