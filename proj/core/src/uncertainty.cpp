#include "uace/uncertainty.hpp"

#include "uace/activation.hpp"
#include "uace/baselines.hpp"
#include "uace/error.hpp"
#include "uace/metrics.hpp"
#include "uace/parallel.hpp"
#include "uace/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace uace {

void VariantConfig::validate() const {
  if (n_samples < 2) throw ValidationError("n_samples must be >= 2");
  if (!(subsample_fraction > 0 && subsample_fraction <= 1)) {
    throw ValidationError("subsample_fraction must be in (0, 1]");
  }
  if (df_steps < 1) throw ValidationError("df_steps must be >= 1");
  if (!(df_lr > 0)) throw ValidationError("df_lr must be > 0");
  if (!(df_beta >= 0)) throw ValidationError("df_beta must be >= 0");
}

namespace {

std::vector<Eigen::Index> shuffled(Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

MatrixXd take_rows(const MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

double softplus(double z) { return z > 30 ? z : std::log1p(std::exp(z)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kSigmaFloor = 1e-4;

}  // namespace

VectorXd mc_uncertainty(const ProbeBundle& bundle, const VariantConfig& config) {
  config.validate();
  validate(bundle);
  const MatrixXd repr = to_double(bundle.repr);
  const MatrixXd repr_n = row_normalized(repr);
  const MatrixXd cos_theta =
      cosine_matrix(to_double(bundle.mm_image), to_double(bundle.concept_text));
  const Eigen::Index n = repr.rows();
  const auto sub = std::max<Eigen::Index>(
      2, static_cast<Eigen::Index>(std::floor(config.subsample_fraction * static_cast<double>(n))));

  const auto s_count = static_cast<std::size_t>(config.n_samples);
  std::vector<MatrixXd> acts(s_count);
  parallel_for(s_count, [&](std::size_t s) {
    Rng rng(derive_seed(config.seed, s));
    std::vector<Eigen::Index> rows = shuffled(n, rng);
    rows.resize(static_cast<std::size_t>(sub));
    std::sort(rows.begin(), rows.end());
    const AlphaFit fit = fit_alpha(take_rows(repr_n, rows), take_rows(cos_theta, rows));
    acts[s] = repr * fit.cav.transpose();
  });

  // Two-pass variance in a fixed order, independent of thread count.
  MatrixXd mean = MatrixXd::Zero(n, bundle.n_concepts());
  for (const auto& a : acts) mean += a;
  mean /= static_cast<double>(s_count);
  MatrixXd var = MatrixXd::Zero(n, bundle.n_concepts());
  for (const auto& a : acts) var.array() += (a - mean).array().square();
  var /= static_cast<double>(s_count - 1);
  return var.colwise().mean().transpose();
}

DistributionFit distribution_fit(const MatrixXd& features, const MatrixXd& targets,
                                 const VariantConfig& config) {
  config.validate();
  if (features.rows() != targets.rows()) throw DimensionError("distribution_fit: row mismatch");
  const Eigen::Index n = features.rows();
  const Eigen::Index k = targets.cols();
  const double beta = config.df_beta;
  const auto nd = static_cast<double>(n);

  // Per-concept losses and, optionally, gradients of the loss w.r.t. the
  // linear predictors (mu and the pre-softplus scale z).
  auto evaluate = [&](const MatrixXd& p, const MatrixXd& q, MatrixXd* d_mu, MatrixXd* d_z) {
    const MatrixXd mu = features * p;
    const MatrixXd z = features * q;
    VectorXd loss = VectorXd::Zero(k);
    if (d_mu != nullptr) {
      d_mu->resize(n, k);
      d_z->resize(n, k);
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      double total = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double m = mu(i, j);
        const double sigma = softplus(z(i, j)) + kSigmaFloor;
        const double r = targets(i, j) - m;
        const double inv2 = 1.0 / (sigma * sigma);
        const double anchor = 1.0 + m * m;
        total += 0.5 * r * r * inv2 + std::log(sigma) +
                 beta * (std::log(sigma) + 0.5 * anchor * inv2 - 0.5);
        if (d_mu != nullptr) {
          (*d_mu)(i, j) = (-r + beta * m) * inv2 / nd;
          const double d_sigma = (-r * r * inv2 + 1.0 + beta * (1.0 - anchor * inv2)) / sigma;
          (*d_z)(i, j) = d_sigma * sigmoid(z(i, j)) / nd;
        }
      }
      loss(j) = total / nd;
    }
    return loss;
  };

  DistributionFit out;
  MatrixXd p = MatrixXd::Zero(features.cols(), k);
  MatrixXd q = MatrixXd::Zero(features.cols(), k);
  VectorXd step = VectorXd::Constant(k, config.df_lr);
  MatrixXd d_mu;
  MatrixXd d_z;
  VectorXd loss = evaluate(p, q, &d_mu, &d_z);
  if (!loss.allFinite()) throw NumericalError("distribution_fit: non-finite loss at initialization");
  out.loss_history.reserve(static_cast<std::size_t>(config.df_steps));

  for (int it = 0; it < config.df_steps; ++it) {
    const MatrixXd gp = features.transpose() * d_mu;
    const MatrixXd gq = features.transpose() * d_z;
    // Per-concept backtracking: a concept's step is accepted only if its own
    // loss does not increase, so the summed loss is non-increasing.
    std::vector<bool> done(static_cast<std::size_t>(k), false);
    MatrixXd p_next = p;
    MatrixXd q_next = q;
    for (int attempt = 0; attempt < 60; ++attempt) {
      MatrixXd p_try = p;
      MatrixXd q_try = q;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (done[static_cast<std::size_t>(j)]) continue;
        p_try.col(j) -= step(j) * gp.col(j);
        q_try.col(j) -= step(j) * gq.col(j);
      }
      const VectorXd trial = evaluate(p_try, q_try, nullptr, nullptr);
      bool all_done = true;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (done[static_cast<std::size_t>(j)]) continue;
        if (std::isfinite(trial(j)) && trial(j) <= loss(j)) {
          p_next.col(j) = p_try.col(j);
          q_next.col(j) = q_try.col(j);
          done[static_cast<std::size_t>(j)] = true;
          step(j) = std::min(config.df_lr, 2.0 * step(j));
        } else {
          step(j) *= 0.5;
          all_done = false;
        }
      }
      if (all_done) break;
    }
    p = std::move(p_next);
    q = std::move(q_next);
    loss = evaluate(p, q, &d_mu, &d_z);
    const double total = loss.sum();
    if (!std::isfinite(total)) {
      const double last = out.loss_history.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                   : out.loss_history.back();
      throw NumericalError("distribution_fit diverged; last finite loss " + std::to_string(last));
    }
    out.loss_history.push_back(total);
  }

  const MatrixXd z = features * q;
  out.epsilon.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    double total = 0;
    for (Eigen::Index i = 0; i < n; ++i) total += softplus(z(i, j)) + kSigmaFloor;
    out.epsilon(j) = total / nd;
  }
  out.p = p.transpose();
  out.q = q.transpose();
  return out;
}

DistributionFit distribution_fit(const ProbeBundle& bundle, const VariantConfig& config) {
  validate(bundle);
  return distribution_fit(
      row_normalized(to_double(bundle.repr)),
      cosine_matrix(to_double(bundle.mm_image), to_double(bundle.concept_text)), config);
}

UncertaintyEvaluation evaluate_uncertainty(const VectorXd& epsilon_est, const ProbeBundle& bundle,
                                           std::uint64_t seed) {
  validate(bundle);
  if (!bundle.annotations) throw ValidationError("evaluate_uncertainty: bundle has no annotations");
  const Eigen::Index k_count = bundle.n_concepts();
  if (epsilon_est.size() != k_count) throw DimensionError("evaluate_uncertainty: epsilon length");
  const MatrixXd repr = to_double(bundle.repr);
  const Eigen::Index n = repr.rows();

  Rng rng(seed);
  const std::vector<Eigen::Index> order = shuffled(n, rng);
  std::vector<Eigen::Index> train(order.begin(), order.begin() + (n + 1) / 2);
  std::vector<Eigen::Index> test(order.begin() + (n + 1) / 2, order.end());
  if (test.empty()) throw ValidationError("evaluate_uncertainty: need at least 2 examples");
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  const MatrixXd x_train = take_rows(repr, train);
  const MatrixXd x_test = take_rows(repr, test);

  UncertaintyEvaluation ev;
  ev.error_rate = VectorXd::Constant(k_count, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> included(static_cast<std::size_t>(k_count), 0);
  parallel_for(static_cast<std::size_t>(k_count), [&](std::size_t kk) {
    const auto k = static_cast<Eigen::Index>(kk);
    const auto& ann = *bundle.annotations;
    const int positives = static_cast<int>(ann.col(k).cast<int>().sum());
    if (positives < 2 || n - positives < 2) return;
    std::vector<int> y_train(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) y_train[i] = ann(train[i], k) != 0 ? 1 : 0;
    const int train_pos = std::accumulate(y_train.begin(), y_train.end(), 0);
    double errors = 0;
    if (train_pos == 0 || train_pos == static_cast<int>(train.size())) {
      // One-class training split: the probe predicts that class.
      for (Eigen::Index i : test) errors += (ann(i, k) != 0) != (train_pos != 0) ? 1.0 : 0.0;
    } else {
      const LogisticFit fit = binary_logistic(x_train, y_train);
      const VectorXd z = x_test * fit.weights.row(0).transpose();
      for (std::size_t i = 0; i < test.size(); ++i) {
        const bool pred = z(static_cast<Eigen::Index>(i)) + fit.intercept(0) > 0;
        errors += pred != (ann(test[i], k) != 0) ? 1.0 : 0.0;
      }
    }
    ev.error_rate(k) = errors / static_cast<double>(test.size());
    included[kk] = 1;
  });
  ev.included.assign(included.begin(), included.end());

  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    if (included[static_cast<std::size_t>(k)] != 0) keep.push_back(k);
  }
  if (keep.empty()) throw ValidationError("evaluate_uncertainty: no concept has enough annotations");
  VectorXd est(static_cast<Eigen::Index>(keep.size()));
  VectorXd err(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    est(static_cast<Eigen::Index>(i)) = epsilon_est(keep[i]);
    err(static_cast<Eigen::Index>(i)) = ev.error_rate(keep[i]);
  }
  ev.cos_sim = uncertainty_cos_sim(est, err);
  for (std::size_t k : {std::size_t{10}, std::size_t{40}, std::size_t{80}}) {
    const std::size_t kc = std::min(k, keep.size());
    ev.jaccard[k] = jaccard_topk(est, err, kc);
  }
  return ev;
}

}  // namespace uace
