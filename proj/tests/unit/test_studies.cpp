#include "helpers.hpp"
#include "studies.hpp"

#include <doctest.h>

#include <algorithm>

using namespace uace;

// Qualitative behavior of the estimators on the synthetic scenarios, at
// trial counts small enough for the unit run. The acceptance binary repeats
// the headline studies at full size.

namespace {

// Theory lambda (penalty on squared-error loss averaged over examples)
// expressed as the estimator's prior scale.
double prior_scale(double theory_lambda, double beta, int n) { return 1.0 / (beta * n * theory_lambda); }

}  // namespace

TEST_SUITE("studies") {

TEST_CASE("corollary layout: U-ACE puts all weight on the true concept") {
  for (int k : {5, 20}) {
    for (std::uint64_t t = 0; t < 5; ++t) {
      const SyntheticData d = generate(corollary_scenario(k, 128, 400, 2.5, derive_seed(3100, t)));
      const PosteriorExplanation e = explain(d.to_bundle(), study::tuned(), SparsifyConfig{});
      const VectorXd v = e.mu.row(0).transpose().cwiseProduct(d.activation_scale);
      CHECK(v(0) == doctest::Approx(1.0).epsilon(0.05));
      CHECK(v.tail(k - 1).cwiseAbs().maxCoeff() < 0.05);
      const RankedExplanation r = to_ranked(d.concept_names, ranking_scores(e).row(0).transpose());
      CHECK(r.order().front() == 0);
    }
  }
}

TEST_CASE("undercomplete with b = 0: importance vanishes") {
  const SyntheticScenario sc = undercomplete_scenario(0.0, 0.0, 0.1, 16, 2000, 3200);
  const UndercompleteSurrogate s = undercomplete_surrogate(sc);
  const Posterior p = posterior(s.activations, s.epsilon, s.targets, prior_scale(10, 1, sc.n), 1);
  CHECK(p.mu.cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("four colors, equal populations: red and green positive, blue and white not") {
  for (std::uint64_t t = 0; t < 10; ++t) {
    const ProbeBundle b =
        generate(four_color_scenario({1, 1, 1, 1}, ColorConcepts::colors, 400, derive_seed(3300, t))).to_bundle();
    const PosteriorExplanation e = explain(b, study::tuned(), SparsifyConfig{});
    CHECK(e.importance(0, 0) > 0);
    CHECK(e.importance(0, 1) > 0);
    CHECK(e.importance(0, 2) <= 0);
    CHECK(e.importance(0, 3) <= 0);
  }
}

TEST_CASE("four colors, red missing: U-ACE is insignificant where OLS ranks red high") {
  const study::MissingColor m = study::missing_color(30, 3400);
  MESSAGE("max |z| " << *std::max_element(m.uace_abs_z.begin(), m.uace_abs_z.end()) << ", OLS top-2 "
                     << m.ols_top2);
  for (double z : m.uace_abs_z) CHECK(z < 2.0);
  CHECK(m.ols_top2 >= 0.5);
}

TEST_CASE("four colors, compound concepts: U-ACE spreads them less than OLS") {
  const study::CompoundSpread s = study::compound_spread(ColorConcepts::colors_and_compounds, 30, 3500);
  MESSAGE("spread U-ACE " << s.uace << " OLS " << s.ols);
  CHECK(s.uace < 0.55);
  CHECK(s.ols >= 0.5);
  // With only the compounds every method spreads them over the full range,
  // so compare magnitudes instead. Calibrated ratio 0.08 to 0.11 over seven
  // seed bases; frozen at 0.2.
  const study::CompoundSpread c = study::compound_spread(ColorConcepts::compounds, 10, 3600);
  MESSAGE("compounds only: U-ACE / OLS magnitude " << c.magnitude_ratio);
  CHECK(c.magnitude_ratio < 0.2);
}

TEST_CASE("spurious tag: importance flips sign with the tag probability") {
  const study::TagStudy p0 = study::tag_study(0.0, 10, 3, 3700);
  const study::TagStudy p5 = study::tag_study(0.5, 10, 3, 3800);
  const study::TagStudy p1 = study::tag_study(1.0, 10, 3, 3900);
  for (double z : p0.z) CHECK(z < 0);
  for (double z : p1.z) CHECK(z > 0);
  for (double z : p5.z) CHECK(std::abs(z) < 2);
  CHECK(*std::min_element(p0.z.begin(), p0.z.end()) < -2);
  CHECK(*std::max_element(p1.z.begin(), p1.z.end()) > 2);
  MESSAGE("TCAV tag scores " << p0.tcav << " " << p5.tcav << " " << p1.tcav);
  CHECK(p0.tcav < 0.1);
  CHECK(p1.tcav > 0.9);
}

TEST_CASE("spurious tag: nuisance concepts do not push true concepts down under U-ACE") {
  const study::NuisanceShift s = study::nuisance_shift(50, 15, 4000);
  MESSAGE("U-ACE " << s.uace_before << " -> " << s.uace_after << ", OLS " << s.ols_before << " -> "
                   << s.ols_after);
  CHECK(s.uace_after - s.uace_before < 0.1);
}

}  // TEST_SUITE

// Claims the implementation does not reproduce. They stay red; see README.
TEST_SUITE("studies_open") {

TEST_CASE("corollary layout: OLS weights on the extra concepts have variance sigma^2 |w|^2 / |u|^2") {
  const int k = 20;
  const double ratio = 2.5;
  const int trials = 200;
  VectorXd s1 = VectorXd::Zero(k), s2 = VectorXd::Zero(k);
  SyntheticScenario sc = corollary_scenario(k, 128, 400, ratio, 0);
  for (int t = 0; t < trials; ++t) {
    sc.seed = derive_seed(4100, static_cast<std::uint64_t>(t));
    const SyntheticData d = generate(sc);
    const BaselineReport r = ols_explain(compute_stats(d.repr, d.mm_image, d.concept_text), d.logits);
    const VectorXd v = r.scores.row(0).transpose().cwiseProduct(d.activation_scale);
    s1 += v;
    s2 += v.cwiseProduct(v);
  }
  s1 /= trials;
  const VectorXd var = s2 / trials - s1.cwiseProduct(s1);
  const double predicted = 1.0 / (ratio * ratio);
  // Standard errors of a sample mean and a sample variance of Gaussians.
  const double se_mean = std::sqrt(predicted / trials);
  const double se_var = predicted * std::sqrt(2.0 / (trials - 1));
  const double worst_mean = s1.tail(k - 1).cwiseAbs().maxCoeff();
  const double worst_var = (var.tail(k - 1).array() - predicted).abs().maxCoeff();
  MESSAGE("mean variance " << var.tail(k - 1).mean() << ", predicted " << predicted);
  CHECK(worst_mean <= 3 * se_mean);
  CHECK(worst_var <= 3 * se_var);
}

TEST_CASE("spurious tag: 50 nuisance concepts push OLS true-concept ranks down by more than 0.2") {
  const study::NuisanceShift s = study::nuisance_shift(50, 15, 4200);
  MESSAGE("OLS " << s.ols_before << " -> " << s.ols_after);
  CHECK(s.ols_after - s.ols_before > 0.2);
}

}  // TEST_SUITE
