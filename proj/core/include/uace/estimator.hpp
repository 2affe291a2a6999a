#pragma once

#include "uace/activation.hpp"
#include "uace/bundle.hpp"

#include <cstdint>
#include <vector>

namespace uace {

struct BayesConfig {
  double lambda = 1.0;  // prior scale
  double beta = 1.0;    // observation precision
  bool tune = false;
  int tune_steps = 200;
  double tune_lr = 0.05;
  int tune_noise_samples = 16;
  std::uint64_t seed = 0;

  static constexpr double kLambdaMin = 1e-8;
  static constexpr double kLambdaMax = 1e8;
  static constexpr double kBetaMin = 1e-4;
  static constexpr double kBetaMax = 1e6;

  void validate() const;
};

struct SparsifyConfig {
  double kappa = 0.02;  // tolerated drop in probe-set agreement
  void validate() const;
};

// Per-label Gaussian posterior over concept weights. Rows index labels.
struct Posterior {
  MatrixXd mu;          // L x K
  MatrixXd sigma_diag;  // L x K, posterior variances
};

struct PosteriorExplanation {
  MatrixXd mu;          // L x K
  MatrixXd sigma_diag;  // L x K
  MatrixXd w_sparse;    // L x K
  MatrixXd importance;  // L x K, mu / sqrt(sigma_diag)
  double lambda_used = 0;
  double beta_used = 0;
  double sparsify_threshold = 0;
  double tune_objective = 0;
};

// Squared prior precisions diag(eps * eps) with the zero-noise floor applied.
VectorXd prior_precision(const VectorXd& epsilon);

// Posterior for every column of `targets` (N x L) given activations.
//   Sigma^-1 = beta C C' + lambda^-1 diag(eps^2),   mu = beta Sigma C y
// with C = stats.m' (K x N). The precision matrix is shared across labels
// and factored once.
Posterior posterior(const ActivationStats& stats, const MatrixXd& targets, double lambda,
                    double beta);

// Same with explicit activations and noise (used by theory harnesses that
// build activations analytically).
Posterior posterior(const MatrixXd& activations, const VectorXd& epsilon, const MatrixXd& targets,
                    double lambda, double beta);

// Monte-Carlo type-II likelihood objective for (lambda, beta), averaged over
// fixed noise draws Z ~ U[-s, s] and summed over labels:
//   E_Z[ -beta^2 |Y - (C + Z)' w(lambda, beta)|^2 / 2 + log beta ]
// where w is the posterior mean re-solved on the perturbed activations.
class TuningObjective {
 public:
  TuningObjective(const ActivationStats& stats, const MatrixXd& targets, int noise_samples,
                  std::uint64_t seed);

  [[nodiscard]] double operator()(double lambda, double beta) const;

  // Direct evaluation by solving the posterior for each draw. Slow; used to
  // check the spectral evaluation above.
  [[nodiscard]] double evaluate_direct(double lambda, double beta) const;

  [[nodiscard]] const std::vector<MatrixXd>& noise() const { return noise_; }

 private:
  struct Draw {
    VectorXd singular_sq;  // r
    MatrixXd proj_sq;      // r x L, squared projections of targets
    VectorXd residual_sq;  // L, target energy outside the right singular space
  };
  const ActivationStats* stats_;
  MatrixXd targets_;
  VectorXd prior_;
  std::vector<MatrixXd> noise_;
  std::vector<Draw> draws_;
};

struct TuneResult {
  double lambda = 0;
  double beta = 0;
  double objective = 0;
};

TuneResult tune_hyperparams(const ActivationStats& stats, const MatrixXd& targets,
                            const BayesConfig& config);

// Fraction of examples where argmax_y (W m(x)) matches argmax_y logits(x).
double agreement(const MatrixXd& weights, const MatrixXd& activations, const MatrixXd& logits);

struct SparsifyResult {
  MatrixXd weights;
  double threshold = 0;  // entries with |w| < threshold were zeroed
};

SparsifyResult sparsify(const MatrixXd& mu, const MatrixXd& activations, const MatrixXd& logits,
                        double kappa);

PosteriorExplanation explain(const ActivationStats& stats, const MatrixXd& logits,
                             const BayesConfig& config, const SparsifyConfig& sparsify_config);
PosteriorExplanation explain(const ProbeBundle& bundle, const BayesConfig& config,
                             const SparsifyConfig& sparsify_config);

// Scores used for ranking: importance where the sparse weight survived, 0 elsewhere.
MatrixXd ranking_scores(const PosteriorExplanation& e);

}  // namespace uace
