#include "uace/estimator.hpp"

#include "uace/error.hpp"
#include "uace/random.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace uace {

void BayesConfig::validate() const {
  if (!(lambda > 0) || !std::isfinite(lambda)) throw UsageError("lambda must be positive");
  if (!(beta > 0) || !std::isfinite(beta)) throw UsageError("beta must be positive");
  if (tune_steps < 1 || tune_noise_samples < 1)
    throw UsageError("tune_steps and tune_noise_samples must be >= 1");
  if (!(tune_lr > 0)) throw UsageError("tune_lr must be positive");
}

void SparsifyConfig::validate() const {
  if (!(kappa >= 0 && kappa < 1)) throw UsageError("kappa must lie in [0, 1)");
}

VectorXd prior_precision(const VectorXd& epsilon) {
  VectorXd sq = epsilon.array().square();
  const double floor = 1e-12 * (sq.size() > 0 ? sq.mean() : 0.0) + 1e-30;
  return sq.cwiseMax(floor);
}

Posterior posterior(const MatrixXd& activations, const VectorXd& epsilon, const MatrixXd& targets,
                    double lambda, double beta) {
  if (activations.rows() != targets.rows())
    throw ValidationError("posterior: activations and targets disagree on example count");
  if (!activations.allFinite() || !targets.allFinite() || !epsilon.allFinite())
    throw NumericalError("posterior: non-finite input");
  MatrixXd precision = beta * (activations.transpose() * activations);
  precision.diagonal() += prior_precision(epsilon) / lambda;
  const SpdFactor factor(precision);

  Posterior out;
  out.mu = (beta * factor.solve(activations.transpose() * targets)).transpose();
  const VectorXd var = factor.inverse_diagonal();
  out.sigma_diag = var.transpose().replicate(targets.cols(), 1);
  return out;
}

Posterior posterior(const ActivationStats& stats, const MatrixXd& targets, double lambda,
                    double beta) {
  return posterior(stats.m, stats.epsilon, targets, lambda, beta);
}

// Evaluation through the SVD of the prior-whitened activations A = (C+Z) E^(-1/2):
// the fitted values are U diag(b s^2 / (b s^2 + 1/l)) U'Y, so every residual
// norm is a closed-form function of (lambda * beta) once U and s are known.
TuningObjective::TuningObjective(const ActivationStats& stats, const MatrixXd& targets,
                                 int noise_samples, std::uint64_t seed)
    : stats_(&stats), targets_(targets), prior_(prior_precision(stats.epsilon)) {
  const auto n = stats.m.rows();
  const auto k = stats.m.cols();
  const VectorXd whiten = prior_.array().rsqrt();
  const VectorXd target_energy = targets_.colwise().squaredNorm().transpose();
  noise_.reserve(static_cast<std::size_t>(noise_samples));
  draws_.reserve(static_cast<std::size_t>(noise_samples));
  for (int d = 0; d < noise_samples; ++d) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(d)));
    MatrixXd z(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < k; ++j) z(i, j) = rng.uniform(-1.0, 1.0) * stats.s(i, j);
    const MatrixXd a = (stats.m + z) * whiten.asDiagonal();
    Eigen::BDCSVD<MatrixXd> svd(a, Eigen::ComputeThinU);
    Draw dr;
    dr.singular_sq = svd.singularValues().array().square();
    const MatrixXd proj = svd.matrixU().transpose() * targets_;
    dr.proj_sq = proj.array().square();
    dr.residual_sq = (target_energy - dr.proj_sq.colwise().sum().transpose()).cwiseMax(0.0);
    noise_.push_back(std::move(z));
    draws_.push_back(std::move(dr));
  }
}

double TuningObjective::operator()(double lambda, double beta) const {
  const double lb = lambda * beta;
  const double labels = static_cast<double>(targets_.cols());
  double total = 0;
  for (const auto& dr : draws_) {
    const VectorXd shrink = (1.0 / (1.0 + lb * dr.singular_sq.array())).square();
    const double rss = dr.residual_sq.sum() + (dr.proj_sq.transpose() * shrink).sum();
    total += -beta * beta * rss / 2.0 + labels * std::log(beta);
  }
  return total / static_cast<double>(draws_.size());
}

double TuningObjective::evaluate_direct(double lambda, double beta) const {
  const double labels = static_cast<double>(targets_.cols());
  double total = 0;
  for (const auto& z : noise_) {
    const MatrixXd c = stats_->m + z;
    const Posterior p = posterior(c, stats_->epsilon, targets_, lambda, beta);
    const double rss = (targets_ - c * p.mu.transpose()).squaredNorm();
    total += -beta * beta * rss / 2.0 + labels * std::log(beta);
  }
  return total / static_cast<double>(noise_.size());
}

TuneResult tune_hyperparams(const ActivationStats& stats, const MatrixXd& targets,
                            const BayesConfig& config) {
  config.validate();
  const TuningObjective objective(stats, targets, config.tune_noise_samples, config.seed);

  const double lo_l = std::log(BayesConfig::kLambdaMin), hi_l = std::log(BayesConfig::kLambdaMax);
  const double lo_b = std::log(BayesConfig::kBetaMin), hi_b = std::log(BayesConfig::kBetaMax);
  double x[2] = {std::clamp(std::log(config.lambda), lo_l, hi_l),
                 std::clamp(std::log(config.beta), lo_b, hi_b)};
  auto f = [&](double a, double b) { return objective(std::exp(a), std::exp(b)); };

  if (!std::isfinite(f(x[0], x[1])))
    throw NumericalError("tuning objective is non-finite at initialization; try rescaling logits");

  // Adam ascent in log space with central finite differences (relative step
  // 1e-4 in lambda and beta).
  constexpr double h = 1e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= config.tune_steps; ++t) {
    const double g[2] = {(f(x[0] + h, x[1]) - f(x[0] - h, x[1])) / (2 * h),
                         (f(x[0], x[1] + h) - f(x[0], x[1] - h)) / (2 * h)};
    if (!std::isfinite(g[0]) || !std::isfinite(g[1]))
      throw NumericalError("tuning gradient became non-finite at step " + std::to_string(t));
    for (int i = 0; i < 2; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      x[i] += config.tune_lr * mh / (std::sqrt(vh) + eps);
    }
    x[0] = std::clamp(x[0], lo_l, hi_l);
    x[1] = std::clamp(x[1], lo_b, hi_b);
  }
  TuneResult r;
  r.lambda = std::exp(x[0]);
  r.beta = std::exp(x[1]);
  r.objective = f(x[0], x[1]);
  return r;
}

namespace {

Eigen::Index argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = j;
  return best;
}

std::vector<Eigen::Index> argmax_rows(const MatrixXd& m) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_row(m.row(i));
  return out;
}

double agreement_of_scores(const MatrixXd& scores, const std::vector<Eigen::Index>& truth) {
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    hits += argmax_row(scores.row(i)) == truth[static_cast<std::size_t>(i)];
  return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

MatrixXd apply_threshold(const MatrixXd& mu, double t) {
  return (mu.array().abs() < t).select(0.0, mu);
}

}  // namespace

double agreement(const MatrixXd& weights, const MatrixXd& activations, const MatrixXd& logits) {
  return agreement_of_scores(activations * weights.transpose(), argmax_rows(logits));
}

SparsifyResult sparsify(const MatrixXd& mu, const MatrixXd& activations, const MatrixXd& logits,
                        double kappa) {
  SparsifyConfig{kappa}.validate();
  const auto truth = argmax_rows(logits);
  const double base = agreement_of_scores(activations * mu.transpose(), truth);
  const double target = base - kappa;

  // Candidate thresholds: each distinct |mu| value (zeroing everything
  // strictly below it) plus one just above the maximum (zero everything).
  struct Entry {
    double mag;
    Eigen::Index label, col;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(mu.size()));
  for (Eigen::Index y = 0; y < mu.rows(); ++y)
    for (Eigen::Index k = 0; k < mu.cols(); ++k) entries.push_back({std::abs(mu(y, k)), y, k});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.mag != b.mag) return a.mag < b.mag;
    if (a.label != b.label) return a.label < b.label;
    return a.col < b.col;
  });

  // Sweep upward, removing entries incrementally from the score matrix.
  MatrixXd scores = activations * mu.transpose();
  // A label whose weights are all removed must score exactly 0, not the
  // rounding residue of the subtractions, or argmax ties come out wrong.
  std::vector<Eigen::Index> remaining(static_cast<std::size_t>(mu.rows()), mu.cols());
  std::vector<double> candidates;
  std::vector<bool> feasible;
  std::size_t e = 0;
  while (true) {
    const double t = e < entries.size()
                         ? entries[e].mag
                         : std::nextafter(entries.empty() ? 0.0 : entries.back().mag,
                                          std::numeric_limits<double>::infinity());
    candidates.push_back(t);
    feasible.push_back(agreement_of_scores(scores, truth) >= target);
    if (e >= entries.size()) break;
    // Remove every entry with magnitude equal to t before testing the next one.
    const double mag = entries[e].mag;
    while (e < entries.size() && entries[e].mag == mag) {
      const auto& en = entries[e];
      scores.col(en.label) -= activations.col(en.col) * mu(en.label, en.col);
      if (--remaining[static_cast<std::size_t>(en.label)] == 0) scores.col(en.label).setZero();
      ++e;
    }
  }

  // Largest feasible candidate, confirmed on freshly computed scores.
  for (std::size_t c = candidates.size(); c-- > 0;) {
    if (!feasible[c]) continue;
    MatrixXd w = apply_threshold(mu, candidates[c]);
    if (agreement(w, activations, logits) >= target) return {std::move(w), candidates[c]};
  }
  return {mu, 0.0};
}

PosteriorExplanation explain(const ActivationStats& stats, const MatrixXd& logits,
                             const BayesConfig& config, const SparsifyConfig& sparsify_config) {
  config.validate();
  sparsify_config.validate();
  PosteriorExplanation out;
  out.lambda_used = config.lambda;
  out.beta_used = config.beta;
  if (config.tune) {
    const TuneResult tr = tune_hyperparams(stats, logits, config);
    out.lambda_used = tr.lambda;
    out.beta_used = tr.beta;
    out.tune_objective = tr.objective;
  }
  Posterior p = posterior(stats, logits, out.lambda_used, out.beta_used);
  out.importance = p.mu.array() / p.sigma_diag.array().sqrt();
  SparsifyResult sp = sparsify(p.mu, stats.m, logits, sparsify_config.kappa);
  out.w_sparse = std::move(sp.weights);
  out.sparsify_threshold = sp.threshold;
  out.mu = std::move(p.mu);
  out.sigma_diag = std::move(p.sigma_diag);
  if (!out.importance.allFinite()) throw NumericalError("importance scores are not finite");
  return out;
}

PosteriorExplanation explain(const ProbeBundle& bundle, const BayesConfig& config,
                             const SparsifyConfig& sparsify_config) {
  const ActivationStats stats = compute_stats(bundle);
  return explain(stats, to_double(bundle.logits), config, sparsify_config);
}

MatrixXd ranking_scores(const PosteriorExplanation& e) {
  return (e.w_sparse.array() != 0).select(e.importance, 0.0);
}

}  // namespace uace
