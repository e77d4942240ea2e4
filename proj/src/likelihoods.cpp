#include "gpdrf/likelihoods.hpp"

#include <cmath>
#include <numbers>

#include "gpdrf/counter_rng.hpp"
#include "gpdrf/errors.hpp"

namespace gpdrf::lik {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
}

void validate(const LikelihoodSpec& spec) {
  if (spec.kind == Kind::softmax && spec.classes < 2) {
    throw ConfigError("softmax likelihood needs at least 2 classes, got " +
                      std::to_string(spec.classes));
  }
}

int class_index(double target, const LikelihoodSpec& spec) {
  if (std::floor(target) != target || target < 0.0 ||
      target >= static_cast<double>(spec.classes)) {
    throw InvalidArgumentError("class label " + std::to_string(target) +
                               " is not an integer in [0, " +
                               std::to_string(spec.classes) + ")");
  }
  return static_cast<int>(target);
}

double log_likelihood(double target, const Eigen::VectorXd& g,
                      const LikelihoodSpec& spec) {
  if (g.size() != spec.output_dim()) {
    throw ShapeError("log_likelihood: output dim " + std::to_string(g.size()) +
                     ", expected " + std::to_string(spec.output_dim()));
  }
  if (spec.kind == Kind::gaussian) {
    const double r = target - g(0);
    return -0.5 * (kLogTwoPi + spec.log_noise_var) -
           0.5 * r * r / spec.noise_var();
  }
  const int y = class_index(target, spec);
  const double m = g.maxCoeff();
  const double lse = m + std::log((g.array() - m).exp().sum());
  return g(y) - lse;
}

double sample_target(const Eigen::VectorXd& g, const LikelihoodSpec& spec,
                     std::uint64_t seed,
                     std::initializer_list<std::uint64_t> words) {
  if (g.size() != spec.output_dim()) {
    throw ShapeError("sample_target: output dim " + std::to_string(g.size()) +
                     ", expected " + std::to_string(spec.output_dim()));
  }
  const double u = rng::uniform01(seed, words);
  if (spec.kind == Kind::gaussian) {
    return g(0) + std::sqrt(spec.noise_var()) * rng::inverse_normal_cdf(u);
  }
  const double m = g.maxCoeff();
  const Eigen::ArrayXd p = (g.array() - m).exp() / (g.array() - m).exp().sum();
  double cum = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    cum += p(k);
    if (u <= cum) return static_cast<double>(k);
  }
  return static_cast<double>(p.size() - 1);  // u landed in round-off slack
}

diff::Var gaussian_loglik_tape(diff::Tape& tape, const std::vector<double>& targets,
                               diff::Var g, diff::Var log_noise_var) {
  using namespace diff;
  const auto b = static_cast<Eigen::Index>(targets.size());
  if (g.value().rows() != 1 || g.value().cols() != b) {
    throw ShapeError("gaussian log-likelihood: outputs are " +
                     std::to_string(g.value().rows()) + "x" +
                     std::to_string(g.value().cols()) + " for " +
                     std::to_string(b) + " targets");
  }
  Matrix y(1, b);
  for (Eigen::Index i = 0; i < b; ++i) y(0, i) = targets[static_cast<std::size_t>(i)];
  const Var resid = square(sub(tape.constant(y), g));
  const Var inv_var = bcast_scalar(scale(exp(neg(log_noise_var)), 0.5), 1, b);
  const Var quad = mul(resid, inv_var);
  const Var norm = shift(scale(bcast_scalar(log_noise_var, 1, b), -0.5),
                         -0.5 * kLogTwoPi);
  return sub(norm, quad);
}

diff::Var softmax_loglik_tape(diff::Tape& tape, const std::vector<double>& targets,
                              diff::Var logits, const LikelihoodSpec& spec) {
  using namespace diff;
  (void)tape;
  const auto b = static_cast<Eigen::Index>(targets.size());
  if (logits.value().rows() != spec.output_dim() || logits.value().cols() != b) {
    throw ShapeError("softmax log-likelihood: logits are " +
                     std::to_string(logits.value().rows()) + "x" +
                     std::to_string(logits.value().cols()) + " for " +
                     std::to_string(b) + " targets of dim " +
                     std::to_string(spec.output_dim()));
  }
  std::vector<int> rows(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    rows[i] = class_index(targets[i], spec);
  }
  return sub(gather_cols(logits, rows), logsumexp_cols(logits));
}

}  // namespace gpdrf::lik
