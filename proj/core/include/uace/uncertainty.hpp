#pragma once

#include "uace/bundle.hpp"
#include "uace/linalg.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace uace {

struct VariantConfig {
  int n_samples = 10;               // MC repetitions, >= 2
  double subsample_fraction = 0.8;  // MC split size, sampled without replacement
  int df_steps = 500;
  double df_lr = 0.5;               // initial and maximum step of the backtracking descent
  double df_beta = 1e-3;            // weight of the KL anchor
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean over examples of the across-repetition variance (S - 1 denominator)
// of the activation repr(x) . cav_k, refitting the CAVs on random subsamples.
VectorXd mc_uncertainty(const ProbeBundle& bundle, const VariantConfig& config);

struct DistributionFit {
  VectorXd epsilon;                 // K, mean over examples of sigma_k(x)
  MatrixXd p;                       // K x d_f, mean head
  MatrixXd q;                       // K x d_f, pre-softplus scale head
  std::vector<double> loss_history; // summed per-concept loss after each step
};

// Fits mu_k(x) = p_k . f(x) and sigma_k(x) = softplus(q_k . f(x)) + 1e-4 to
// the cosine similarities between image and concept text, with f the
// row-normalized representation. Per concept and example the loss is
//   (t - mu)^2 / (2 sigma^2) + log sigma + df_beta * KL(N(0, 1) || N(mu, sigma^2))
// averaged over examples.
DistributionFit distribution_fit(const ProbeBundle& bundle, const VariantConfig& config);

// Same, on explicit features (rows already normalized if desired) and targets.
DistributionFit distribution_fit(const MatrixXd& features, const MatrixXd& targets,
                                 const VariantConfig& config);

struct UncertaintyEvaluation {
  VectorXd error_rate;        // K, held-out probe error; NaN for excluded concepts
  std::vector<bool> included; // K, concepts with >= 2 positive and >= 2 negative annotations
  double cos_sim = 0;
  std::map<std::size_t, double> jaccard;  // k -> Jaccard of top-k sets
};

// Ground truth is the held-out error of a logistic probe on repr per concept.
// Examples are split in half after a seeded shuffle; k in {10, 40, 80} is
// clipped to the number of included concepts.
UncertaintyEvaluation evaluate_uncertainty(const VectorXd& epsilon_est, const ProbeBundle& bundle,
                                           std::uint64_t seed = 0);

}  // namespace uace
