#pragma once

#include "uace/activation.hpp"
#include "uace/bundle.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace uace {

enum class Method { uace, ols, oracle, ycbm, ocbm, tcav };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct BaselineReport {
  Method method = Method::ols;
  MatrixXd scores;                         // L x K
  std::vector<bool> scored;                // K; false for concepts a method could not score
  std::map<std::string, double> metadata;  // solver settings
  std::optional<std::uint64_t> seed;       // stochastic methods only
};

// ---- solvers ---------------------------------------------------------------

struct LassoOptions {
  double alpha = 1e-3;  // L1 strength on (1/2n)|y - Xw - b|^2 + alpha |w|_1
  double tolerance = 1e-8;
  int max_sweeps = 100000;
};

struct LassoFit {
  MatrixXd coef;      // L x d, one row per target column
  VectorXd intercept; // L
  int sweeps = 0;
};

// Cyclic coordinate descent with covariance updates, intercept unpenalized.
LassoFit lasso(const MatrixXd& x, const MatrixXd& targets, const LassoOptions& options = {});

struct LogisticOptions {
  double l2 = 1.0;  // objective: mean log-loss + l2 / (2n) |W|^2
  double gradient_tolerance = 1e-7;
  int max_iterations = 5000;
};

struct LogisticFit {
  MatrixXd weights;    // C x d (C = classes; binary fits use one row)
  VectorXd intercept;  // C
  double gradient_norm = 0;
  int iterations = 0;
};

// Multinomial logistic regression on integer labels in [0, classes).
LogisticFit multinomial_logistic(const MatrixXd& x, const std::vector<int>& labels, int classes,
                                 const LogisticOptions& options = {});

// Binary logistic regression on 0/1 labels. weights has a single row.
LogisticFit binary_logistic(const MatrixXd& x, const std::vector<int>& labels,
                            const LogisticOptions& options = {});

// Value and gradient of the multinomial objective above, for optimality checks.
double multinomial_objective(const MatrixXd& x, const std::vector<int>& labels, int classes,
                             double l2, const MatrixXd& weights, const VectorXd& intercept,
                             MatrixXd* grad_weights = nullptr, VectorXd* grad_intercept = nullptr);

// ---- estimators ------------------------------------------------------------

// Unregularized least squares of each logit column on stats.m (jitter 1e-10
// only when rank deficient).
BaselineReport ols_explain(const ActivationStats& stats, const MatrixXd& logits);

BaselineReport oracle_explain(const ProbeBundle& bundle, double l1_strength = 1e-3);

// Lasso of logits on raw multimodal cosine activations.
BaselineReport ycbm_explain(const ProbeBundle& bundle, double l1_strength = 1e-3);

// Logistic regression from projected activations to argmax labels.
BaselineReport ocbm_explain(const ProbeBundle& bundle, double l2_strength = 1.0);

struct TcavOptions {
  int repeats = 10;                // CAVs trained per concept
  double subsample_fraction = 0.8; // examples used per CAV
  double l2 = 1.0;
  std::uint64_t seed = 0;
};

BaselineReport tcav_explain(const ProbeBundle& bundle, const TcavOptions& options = {});

// Labels argmax_y logits(i, y), ties to the lowest index.
std::vector<int> argmax_labels(const MatrixXd& logits);

}  // namespace uace
