#pragma once

#include "uace/baselines.hpp"
#include "uace/bundle.hpp"
#include "uace/estimator.hpp"
#include "uace/linalg.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace uace {

enum class ScenarioKind { overcomplete, undercomplete, four_color, spurious_tag };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_from_string(const std::string& s);

// Four-color concept sets: the color names, colors plus the four "x or y"
// compounds, or the compounds alone.
enum class ColorConcepts { colors, colors_and_compounds, compounds };

std::string to_string(ColorConcepts c);
ColorConcepts color_concepts_from_string(const std::string& s);

struct SyntheticScenario {
  ScenarioKind kind = ScenarioKind::overcomplete;
  int dim = 512;  // input dimension D
  int n = 2000;   // examples
  int k = 20;     // concepts (overcomplete only; other kinds fix their own set)

  // Overcomplete: y = w'x, concept k has activation vector u_k + sigma_k xi_k.
  VectorXd w;              // D
  MatrixXd u;              // K x D
  VectorXd sigma;          // K
  bool orthogonal_noise = false;  // xi_k orthogonal to every u_j and xi_j, |xi_k|^2 = D

  // Undercomplete: concepts beta_i u + (1 - beta_i) v, beta_i ~ N(b_i, beta_sigma^2).
  double b1 = 0.05;
  double b2 = 0.03;
  double beta_sigma = 0.1;

  // Four-color: share of each color (red, green, blue, white) in the probe
  // set. The classifier itself is trained on all four. 0 drops a color.
  std::vector<double> populations{0.25, 0.25, 0.25, 0.25};
  ColorConcepts color_concepts = ColorConcepts::colors;

  // Spurious tag.
  double tag_prob = 0.5;
  int nuisance = 0;

  std::uint64_t seed = 0;

  void validate() const;
};

// Overcomplete scenario with u_k = e_k and nonzero, varied u_k'w.
SyntheticScenario overcomplete_scenario(int dim, int n, int k, double max_sigma,
                                        std::uint64_t seed);
// u_1 = w = e_1, sigma_1 = 0, u_k = e_k orthogonal to w for k >= 2 with
// |u_k| / (sigma_k |w|) = ratio.
SyntheticScenario corollary_scenario(int k, int dim, int n, double ratio, std::uint64_t seed);
SyntheticScenario undercomplete_scenario(double b1, double b2, double beta_sigma, int dim, int n,
                                         std::uint64_t seed);
SyntheticScenario four_color_scenario(std::vector<double> populations, ColorConcepts concepts,
                                      int n, std::uint64_t seed);
SyntheticScenario spurious_tag_scenario(double tag_prob, int nuisance, int n, std::uint64_t seed);
SyntheticScenario default_scenario(ScenarioKind kind);

// Generated data in double precision with the injected ground truth.
struct SyntheticData {
  MatrixXd repr;
  MatrixXd logits;
  MatrixXd mm_image;
  MatrixXd concept_text;
  std::vector<std::string> concept_names;
  std::vector<std::string> label_names;
  std::optional<MatrixU8> annotations;

  // Overcomplete/undercomplete: activations c = X w_k and the per-concept
  // factor a_k with stats.m = c * a_k.
  MatrixXd activations;
  VectorXd activation_scale;
  VectorXd concept_weights;  // sampled beta_i (undercomplete)

  [[nodiscard]] ProbeBundle to_bundle() const;
};

SyntheticData generate(const SyntheticScenario& scenario);
SyntheticData gen_overcomplete(const SyntheticScenario& scenario);
SyntheticData gen_undercomplete(const SyntheticScenario& scenario);
SyntheticData gen_four_color(const SyntheticScenario& scenario);
SyntheticData gen_spurious_tag(const SyntheticScenario& scenario);

double normal_cdf(double x);

// prod_{k=2..K} Phi(|u_k| / (sigma_k |w|)) for each K in `k_values`, using
// the first K concepts of the scenario.
std::vector<double> predict_corollary(const SyntheticScenario& scenario,
                                      const std::vector<int>& k_values);

// Undercomplete setting in expectation over beta: activations use the mean
// weights b_i and epsilon_i^2 = 2 beta_sigma^2 (the variance of the
// activation noise (beta_i - b_i)(u - v)'x averaged over x).
struct UndercompleteSurrogate {
  MatrixXd activations;  // N x 2
  VectorXd epsilon;      // 2
  VectorXd targets;      // N
};
UndercompleteSurrogate undercomplete_surrogate(const SyntheticScenario& scenario);

struct TrialSuiteConfig {
  std::vector<Method> methods{Method::uace, Method::ols};
  BayesConfig bayes;
  SparsifyConfig sparsify;
  double l1_strength = 1e-3;
  double l2_strength = 1.0;
  TcavOptions tcav;
  int n_trials = 100;
  std::uint64_t seed = 0;
  std::size_t label = 0;
};

struct MethodSummary {
  Method method = Method::uace;
  VectorXd mean_score;      // K, ranking score averaged over trials
  VectorXd se_score;        // K, standard error of the mean
  VectorXd mean_rank;       // K, mean rank score
  VectorXd top1_frequency;  // K, fraction of trials ranked first
};

struct TrialReport {
  SyntheticScenario scenario;
  TrialSuiteConfig config;
  std::vector<std::string> concept_names;
  std::vector<MethodSummary> methods;
  // Analytic top-1 probability of concept 0 under OLS; set for overcomplete
  // scenarios in the corollary layout (sigma_0 = 0, u_0 parallel to w).
  std::optional<double> predicted_top1;
};

// Trial t uses scenario seed derive_seed(config.seed, t).
TrialReport run_trial_suite(const SyntheticScenario& scenario, const TrialSuiteConfig& config);

// Scores of one method on one bundle, L x K, as used for ranking.
MatrixXd method_scores(Method method, const ProbeBundle& bundle, const TrialSuiteConfig& config,
                       std::uint64_t seed);

std::string to_json(const TrialReport& report);

}  // namespace uace
