#include "gpdrf/gp_layer.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "gpdrf/errors.hpp"

namespace gpdrf::gp {

namespace {

constexpr double kVarianceSlack = 1e-10;  // of k(x,x), absorbs round-off only
constexpr double kLogTwoPi = 1.8378770664093454836;

double kernel_alpha(const kern::KernelSpec& k) {
  return std::visit([](const auto& p) { return p.alpha(); }, k);
}

void validate(const InducingState& state) {
  const auto d0 = state.output_dim();
  const auto m = state.count();
  if (d0 == 0) throw ShapeError("inducing state: no output dims");
  if (m == 0) throw ShapeError("inducing state: no pseudo-inputs");
  if (state.sigma_param.size() != state.mu.size())
    throw ShapeError("inducing state: " + std::to_string(state.mu.size()) +
                     " means vs " + std::to_string(state.sigma_param.size()) +
                     " covariance params");
  if (state.kernels.size() != 1 &&
      state.kernels.size() != static_cast<std::size_t>(d0))
    throw ShapeError("inducing state: " + std::to_string(state.kernels.size()) +
                     " kernels for " + std::to_string(d0) + " output dims");
  for (Eigen::Index j = 0; j < d0; ++j) {
    const auto& mu = state.mu[static_cast<std::size_t>(j)];
    const auto& p = state.sigma_param[static_cast<std::size_t>(j)];
    if (mu.rows() != m || mu.cols() != 1)
      throw ShapeError("inducing state: mu for output dim " + std::to_string(j) +
                       " is " + std::to_string(mu.rows()) + "x" +
                       std::to_string(mu.cols()) + ", want " + std::to_string(m) +
                       "x1");
    if (p.rows() != m || p.cols() != m)
      throw ShapeError("inducing state: covariance param for output dim " +
                       std::to_string(j) + " is " + std::to_string(p.rows()) +
                       "x" + std::to_string(p.cols()));
  }
}

kern::PsdFactor factor_for_kernel(const InducingState& state, std::size_t ki) {
  const auto& k = state.kernels[ki];
  Matrix kbar =
      kern::gram(state.pseudo_inputs, k, state.jitter_scale * kernel_alpha(k));
  try {
    return kern::PsdFactor(kbar);
  } catch (const NotPositiveDefiniteError& e) {
    const std::string scope = state.per_dim_kernels()
                                  ? "output dim " + std::to_string(ki)
                                  : "all output dims";
    throw NotPositiveDefiniteError("inducing gram (" + scope + "): " + e.what());
  }
}

}  // namespace

Matrix sigma_factor(const Matrix& p) {
  Matrix l = p.template triangularView<Eigen::StrictlyLower>();
  l.diagonal() = p.diagonal().array().exp();
  return l;
}

Matrix sigma_of(const Matrix& p) {
  Matrix l = sigma_factor(p);
  return l * l.transpose();
}

MomentsBatch marginal_moments(const kern::Inputs& x, const InducingState& state) {
  validate(state);
  const auto d0 = state.output_dim();
  const auto b_count = kern::input_count(x);
  const auto n_kernels = state.kernels.size();

  // Per kernel: A = Kbar^{-1} Kcross, prior variance pieces kxx and q.
  std::vector<Matrix> a_solve(n_kernels);
  std::vector<Eigen::RowVectorXd> kxx(n_kernels), q(n_kernels);
  for (std::size_t ki = 0; ki < n_kernels; ++ki) {
    const auto& k = state.kernels[ki];
    kern::PsdFactor fac = factor_for_kernel(state, ki);
    const Matrix kcross = kern::gram(state.pseudo_inputs, x, k, 0.0);
    a_solve[ki] = fac.solve(kcross);
    kxx[ki] = kernel_alpha(k) * kern::self_similarity_row(x, k);
    q[ki] = (kcross.array() * a_solve[ki].array()).colwise().sum();
  }

  MomentsBatch out;
  out.a.resize(d0, b_count);
  out.b.resize(d0, b_count);
  for (Eigen::Index j = 0; j < d0; ++j) {
    const std::size_t ji = static_cast<std::size_t>(j);
    const std::size_t ki = state.per_dim_kernels() ? ji : 0;
    const Matrix& a = a_solve[ki];
    out.a.row(j) = (state.mu[ji].transpose() * a).row(0);
    const Matrix sigma = sigma_of(state.sigma_param[ji]);
    const Eigen::RowVectorXd t = (a.array() * (sigma * a).array()).colwise().sum();
    for (Eigen::Index n = 0; n < b_count; ++n) {
      double b = kxx[ki](n) - q[ki](n) + t(n);
      if (b < 0.0) {
        if (b < -kVarianceSlack * kxx[ki](n))
          throw NotPositiveDefiniteError(
              "marginal variance " + std::to_string(b) + " for output dim " +
              std::to_string(j) + ", input " + std::to_string(n) +
              " is negative beyond round-off");
        b = 0.0;
      }
      out.b(j, n) = b;
    }
  }
  return out;
}

MarginalMoments marginal_moments_one(const kern::Inputs& x_single,
                                     const InducingState& state) {
  if (kern::input_count(x_single) != 1)
    throw ShapeError("marginal_moments_one: got " +
                     std::to_string(kern::input_count(x_single)) + " inputs");
  const MomentsBatch batch = marginal_moments(x_single, state);
  return MarginalMoments{batch.a.col(0), batch.b.col(0)};
}

Eigen::VectorXd sample_latent(const MarginalMoments& m, const Eigen::VectorXd& eps) {
  if (eps.size() != m.a.size())
    throw ShapeError("sample_latent: " + std::to_string(eps.size()) +
                     " noise values for " + std::to_string(m.a.size()) +
                     " output dims");
  return m.a.array() + m.b.array().sqrt() * eps.array();
}

double kl_inducing(const InducingState& state) {
  validate(state);
  const auto d0 = state.output_dim();
  const double m = static_cast<double>(state.count());

  const auto n_kernels = state.kernels.size();
  std::vector<std::unique_ptr<kern::PsdFactor>> factors(n_kernels);
  std::vector<double> logdet_kbar(n_kernels);
  for (std::size_t ki = 0; ki < n_kernels; ++ki) {
    factors[ki] = std::make_unique<kern::PsdFactor>(factor_for_kernel(state, ki));
    logdet_kbar[ki] = factors[ki]->logdet();
  }

  double kl = 0.0;
  for (Eigen::Index j = 0; j < d0; ++j) {
    const std::size_t ji = static_cast<std::size_t>(j);
    const std::size_t ki = state.per_dim_kernels() ? ji : 0;
    const Matrix sigma = sigma_of(state.sigma_param[ji]);
    const double tr = factors[ki]->solve(sigma).trace();
    const double quad =
        (state.mu[ji].transpose() * factors[ki]->solve(state.mu[ji]))(0, 0);
    const double logdet_sigma = 2.0 * state.sigma_param[ji].diagonal().sum();
    kl += 0.5 * (tr + quad - m + logdet_kbar[ki] - logdet_sigma);
  }
  return kl;
}

double gp_prior_logdensity(const Matrix& f_cols, const std::vector<Matrix>& grams) {
  const auto d0 = f_cols.cols();
  if (grams.size() != 1 && grams.size() != static_cast<std::size_t>(d0))
    throw ShapeError("gp_prior_logdensity: " + std::to_string(grams.size()) +
                     " grams for " + std::to_string(d0) + " output dims");
  const double m = static_cast<double>(f_cols.rows());

  double total = 0.0;
  std::unique_ptr<kern::PsdFactor> shared;
  for (Eigen::Index j = 0; j < d0; ++j) {
    const kern::PsdFactor* fac = nullptr;
    std::unique_ptr<kern::PsdFactor> own;
    if (grams.size() == 1) {
      if (!shared) shared = std::make_unique<kern::PsdFactor>(grams[0]);
      fac = shared.get();
    } else {
      own = std::make_unique<kern::PsdFactor>(grams[static_cast<std::size_t>(j)]);
      fac = own.get();
    }
    const Matrix f = f_cols.col(j);
    const double quad = (f.transpose() * fac->solve(f))(0, 0);
    total += -0.5 * (m * kLogTwoPi + fac->logdet() + quad);
  }
  return total;
}

// ---- tape side -----------------------------------------------------------

GpBatchCache gp_batch_cache(const kern::Inputs& batch, const InducingState& state) {
  validate(state);
  GpBatchCache cache;
  for (const auto& k : state.kernels) {
    cache.kbar.push_back(
        kern::make_gram_cache(state.pseudo_inputs, state.pseudo_inputs, k));
    cache.kcross.push_back(kern::make_gram_cache(state.pseudo_inputs, batch, k));
    cache.self_row.push_back(kern::self_similarity_row(batch, k));
  }
  return cache;
}

namespace {

struct KernelPieces {
  diff::Var kbar;
  // Cross pieces exist only when built against a batch.
  diff::Var kcross;
  diff::Var a_solve;  // Kbar^{-1} Kcross
  diff::Var q;        // 1 x B, k' K^{-1} k per input
  diff::Var kxx;      // 1 x B prior variances
  Eigen::RowVectorXd kxx_value;
};

std::vector<KernelPieces> build_kernel_pieces(diff::Tape& tape,
                                              const GpBatchCache& cache,
                                              const InducingVars& vars,
                                              const InducingState& state,
                                              bool with_cross) {
  const auto n_kernels = state.kernels.size();
  if (vars.kernel_log_alpha.size() != n_kernels ||
      vars.kernel_aux.size() != n_kernels)
    throw ShapeError("gp layer tape: kernel leaf count does not match state");
  if (cache.kbar.size() != n_kernels ||
      (with_cross && cache.kcross.size() != n_kernels))
    throw ShapeError("gp layer tape: cache kernel count does not match state");

  std::vector<KernelPieces> pieces;
  pieces.reserve(n_kernels);
  for (std::size_t ki = 0; ki < n_kernels; ++ki) {
    const diff::Var la = vars.kernel_log_alpha[ki];
    const diff::Var aux = vars.kernel_aux[ki];
    KernelPieces p;
    p.kbar = kern::gram_tape(tape, cache.kbar[ki], la, aux, state.jitter_scale);
    if (with_cross) {
      p.kcross = kern::gram_tape(tape, cache.kcross[ki], la, aux, 0.0);
      p.a_solve = diff::chol_solve(p.kbar, p.kcross);
      p.q = diff::colwise_sum(diff::mul(p.kcross, p.a_solve));
      const auto b_count = cache.self_row[ki].cols();
      p.kxx = diff::mul(diff::bcast_scalar(diff::exp(la), 1, b_count),
                        tape.constant(cache.self_row[ki]));
      p.kxx_value = std::exp(la.value()(0, 0)) * cache.self_row[ki].row(0);
    }
    pieces.push_back(p);
  }
  return pieces;
}

diff::Var sigma_factor_tape(diff::Tape& tape, diff::Var p) {
  const auto m = p.value().rows();
  Matrix strict_lower = Matrix::Ones(m, m).triangularView<Eigen::StrictlyLower>();
  diff::Var off = diff::mul(p, tape.constant(strict_lower));
  diff::Var d = diff::exp(diff::diag_of(p));
  return diff::add(off, diff::diag_from_vec(d));
}

GpTapeMoments moments_from_pieces(const std::vector<KernelPieces>& pieces,
                                  const InducingVars& vars,
                                  const InducingState& state,
                                  const std::vector<diff::Var>& sigma) {
  const auto d0 = state.output_dim();
  std::vector<diff::Var> a_rows, b_rows;
  Matrix tolerance(d0, pieces[0].kxx_value.cols());
  for (Eigen::Index j = 0; j < d0; ++j) {
    const std::size_t ji = static_cast<std::size_t>(j);
    const std::size_t ki = state.per_dim_kernels() ? ji : 0;
    const KernelPieces& p = pieces[ki];
    a_rows.push_back(diff::matmul(vars.mu[ji], p.a_solve, true, false));
    diff::Var t = diff::colwise_sum(
        diff::mul(p.a_solve, diff::matmul(sigma[ji], p.a_solve)));
    b_rows.push_back(diff::add(diff::sub(p.kxx, p.q), t));
    tolerance.row(j) = kVarianceSlack * p.kxx_value;
  }
  GpTapeMoments out;
  out.a = diff::vstack(a_rows);
  out.b = diff::vstack(b_rows);
  out.sqrt_b = diff::clamped_sqrt(out.b, tolerance);
  return out;
}

diff::Var kl_from_pieces(diff::Tape& tape,
                         const std::vector<KernelPieces>& pieces,
                         const InducingVars& vars, const InducingState& state,
                         const std::vector<diff::Var>& sigma) {
  const auto d0 = state.output_dim();
  const double m = static_cast<double>(state.count());
  diff::Var kl = tape.constant_scalar(0.0);
  for (Eigen::Index j = 0; j < d0; ++j) {
    const std::size_t ji = static_cast<std::size_t>(j);
    const std::size_t ki = state.per_dim_kernels() ? ji : 0;
    const diff::Var kbar = pieces[ki].kbar;
    diff::Var tr = diff::trace(diff::chol_solve(kbar, sigma[ji]));
    diff::Var quad =
        diff::dot(vars.mu[ji], diff::chol_solve(kbar, vars.mu[ji]));
    diff::Var logdet_sigma =
        diff::scale(diff::sum(diff::diag_of(vars.sigma_param[ji])), 2.0);
    diff::Var term = diff::add(diff::sub(diff::add(tr, quad), logdet_sigma),
                               diff::shift(diff::logdet_psd(kbar), -m));
    kl = diff::add(kl, diff::scale(term, 0.5));
  }
  return kl;
}

std::vector<diff::Var> sigma_vars(diff::Tape& tape, const InducingVars& vars,
                                  const InducingState& state) {
  if (vars.mu.size() != static_cast<std::size_t>(state.output_dim()) ||
      vars.sigma_param.size() != vars.mu.size())
    throw ShapeError("gp layer tape: posterior leaf count does not match state");
  std::vector<diff::Var> sigma;
  sigma.reserve(vars.sigma_param.size());
  for (const diff::Var& p : vars.sigma_param) {
    diff::Var l = sigma_factor_tape(tape, p);
    sigma.push_back(diff::matmul(l, l, false, true));
  }
  return sigma;
}

}  // namespace

GpTapeMoments marginal_moments_tape(diff::Tape& tape, const GpBatchCache& cache,
                                    const InducingVars& vars,
                                    const InducingState& state) {
  const auto pieces = build_kernel_pieces(tape, cache, vars, state, true);
  return moments_from_pieces(pieces, vars, state,
                             sigma_vars(tape, vars, state));
}

diff::Var kl_inducing_tape(diff::Tape& tape, const GpBatchCache& cache,
                           const InducingVars& vars, const InducingState& state) {
  const auto pieces = build_kernel_pieces(tape, cache, vars, state, false);
  return kl_from_pieces(tape, pieces, vars, state, sigma_vars(tape, vars, state));
}

GpTapeBundle gp_layer_tape(diff::Tape& tape, const GpBatchCache& cache,
                           const InducingVars& vars, const InducingState& state) {
  const auto pieces = build_kernel_pieces(tape, cache, vars, state, true);
  const auto sigma = sigma_vars(tape, vars, state);
  GpTapeBundle out;
  out.moments = moments_from_pieces(pieces, vars, state, sigma);
  out.kl = kl_from_pieces(tape, pieces, vars, state, sigma);
  return out;
}

}  // namespace gpdrf::gp
