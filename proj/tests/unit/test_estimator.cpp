#include "helpers.hpp"

#include "uace/error.hpp"
#include "uace/estimator.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace uace;

namespace {

struct Instance {
  MatrixXd c;     // N x K activations
  VectorXd eps;   // K
  MatrixXd y;     // N x L
};

Instance random_instance(int n, int k, int l, std::uint64_t seed) {
  Rng rng(seed);
  Instance in;
  in.c = test::gaussian(n, k, rng) * 0.5;
  in.eps = (test::gaussian(k, 1, rng).col(0).array().abs() * 0.5 + 0.05).matrix();
  in.y = test::gaussian(n, l, rng);
  return in;
}

// Nesterov-accelerated gradient descent on
//   beta/2 |y - C w|^2 + 1/(2 lambda) sum eps_k^2 w_k^2.
VectorXd descend(const MatrixXd& c, const VectorXd& eps, const VectorXd& y, double lambda,
                 double beta) {
  const auto k = c.cols();
  const VectorXd prior = eps.array().square() / lambda;
  auto grad = [&](const VectorXd& w) -> VectorXd {
    return -beta * c.transpose() * (y - c * w) + prior.cwiseProduct(w);
  };
  // Lipschitz bound by power iteration on the Hessian.
  VectorXd v = VectorXd::Ones(k);
  double lip = 0;
  for (int i = 0; i < 500; ++i) {
    const VectorXd hv = beta * c.transpose() * (c * v) + prior.cwiseProduct(v);
    lip = hv.norm() / v.norm();
    v = hv / hv.norm();
  }
  lip *= 1.01;
  VectorXd w = VectorXd::Zero(k), prev = w, z = w;
  for (int it = 1; it < 2000000; ++it) {
    const VectorXd g = grad(z);
    prev = w;
    w = z - g / lip;
    z = w + (static_cast<double>(it - 1) / (it + 2)) * (w - prev);
    if (grad(w).cwiseAbs().maxCoeff() < 1e-13 * std::max(1.0, lip)) break;
  }
  return w;
}

// Threshold sweep by brute force: every candidate threshold evaluated from scratch.
double sweep_threshold(const MatrixXd& mu, const MatrixXd& act, const MatrixXd& logits, double kappa) {
  std::set<double> mags;
  for (Eigen::Index i = 0; i < mu.size(); ++i) mags.insert(std::abs(mu.data()[i]));
  std::vector<double> cands(mags.begin(), mags.end());
  cands.push_back(std::nextafter(cands.back(), 1e300));
  const double base = agreement(mu, act, logits);
  double best = 0;
  for (double t : cands) {
    const MatrixXd w = (mu.array().abs() < t).select(0.0, mu);
    if (agreement(w, act, logits) >= base - kappa) best = std::max(best, t);
  }
  return best;
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("posterior mean matches gradient descent (K=3, N=12)") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance in = random_instance(12, 3, 2, seed);
    const double lambda = 0.7, beta = 1.3;
    const Posterior p = posterior(in.c, in.eps, in.y, lambda, beta);
    for (Eigen::Index l = 0; l < 2; ++l) {
      const VectorXd w = descend(in.c, in.eps, in.y.col(l), lambda, beta);
      CHECK((p.mu.row(l).transpose() - w).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("posterior identity and ridge restatement") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(30, 6, 3, 100 + seed);
    const double lambda = 0.5 + static_cast<double>(seed), beta = 2.0;
    const Posterior p = posterior(in.c, in.eps, in.y, lambda, beta);
    MatrixXd prec = beta * in.c.transpose() * in.c;
    prec.diagonal() += in.eps.array().square().matrix() / lambda;
    const MatrixXd rhs = beta * in.c.transpose() * in.y;
    const MatrixXd lhs = prec * p.mu.transpose();
    CHECK((lhs - rhs).norm() <= 1e-8 * rhs.norm());

    MatrixXd ridge = in.c.transpose() * in.c;
    ridge.diagonal() += in.eps.array().square().matrix() / (lambda * beta);
    const MatrixXd w = ridge.colPivHouseholderQr().solve(in.c.transpose() * in.y);
    CHECK((w - p.mu.transpose()).norm() <= 1e-8 * std::max(1.0, w.norm()));

    const MatrixXd cov = prec.inverse();
    for (Eigen::Index l = 0; l < 3; ++l)
      CHECK((p.sigma_diag.row(l).transpose() - cov.diagonal()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(p.sigma_diag.minCoeff() > 0);
  }
}

TEST_CASE("vanishing noise and large beta recover least squares") {
  const Instance in = random_instance(40, 5, 2, 7);
  const Posterior p = posterior(in.c, VectorXd::Zero(5), in.y, 1.0, 1e8);
  const MatrixXd ols = in.c.colPivHouseholderQr().solve(in.y);
  CHECK((p.mu.transpose() - ols).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("zero noise on a concept is floored so the factorization succeeds") {
  Instance in = random_instance(20, 4, 1, 8);
  in.c.col(1) = in.c.col(0);  // C'C singular along (1, -1)
  in.eps(0) = 0.0;
  const Posterior p = posterior(in.c, in.eps, in.y, 1.0, 1.0);
  CHECK(p.mu.allFinite());
  CHECK(p.sigma_diag.minCoeff() > 0);
  const VectorXd pp = prior_precision(in.eps);
  CHECK(pp(0) > 0);
  CHECK(pp(0) == doctest::Approx(1e-12 * in.eps.array().square().mean() + 1e-30));
}

TEST_CASE("singular system with no noise anywhere is a numerical error") {
  const Instance in = random_instance(3, 6, 1, 8);  // K > N
  CHECK_THROWS_AS(posterior(in.c, VectorXd::Zero(6), in.y, 1.0, 1.0), NumericalError);
}

TEST_CASE("huge noise on one concept drives its weight and importance to zero") {
  Instance in = random_instance(40, 4, 1, 9);
  in.eps(2) = 1e6;
  const Posterior p = posterior(in.c, in.eps, in.y, 1.0, 1.0);
  CHECK(std::abs(p.mu(0, 2)) <= 1e-8);
  CHECK(std::abs(p.mu(0, 2) / std::sqrt(p.sigma_diag(0, 2))) <= 1e-5);
}

TEST_CASE("increasing one concept's noise never increases its weight magnitude") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Instance in = random_instance(25, 5, 2, 200 + seed);
    const auto k = static_cast<Eigen::Index>(seed % 5);
    double last[2] = {1e300, 1e300};
    for (double e = 0.0; e <= 5.0; e += 0.25) {
      in.eps(k) = e;
      const Posterior p = posterior(in.c, in.eps, in.y, 1.0, 1.0);
      for (int l = 0; l < 2; ++l) {
        CHECK(std::abs(p.mu(l, k)) <= last[l] * (1 + 1e-12) + 1e-15);
        last[l] = std::abs(p.mu(l, k));
      }
    }
  }
}

TEST_CASE("negated logit column gives negated posterior mean") {
  ProbeBundle b = test::random_bundle(40, 5, 2, 6, 8, 11, false);
  b.logits.col(1) = -b.logits.col(0);
  const PosteriorExplanation e = explain(b, BayesConfig{}, SparsifyConfig{});
  CHECK((e.mu.row(0) + e.mu.row(1)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("explain output invariants") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ProbeBundle b = test::random_bundle(60, 8, 3, 6, 10, 20 + seed, false);
    const PosteriorExplanation e = explain(b, BayesConfig{}, SparsifyConfig{});
    CHECK(e.sigma_diag.minCoeff() > 0);
    CHECK(e.importance.allFinite());
    CHECK((e.importance.array() - e.mu.array() / e.sigma_diag.array().sqrt()).abs().maxCoeff() <= 1e-12);
    for (Eigen::Index i = 0; i < e.mu.size(); ++i) {
      if (e.w_sparse.data()[i] == 0.0)
        CHECK(std::abs(e.mu.data()[i]) < e.sparsify_threshold + (e.mu.data()[i] == 0.0 ? 1.0 : 0.0));
      else
        CHECK(e.w_sparse.data()[i] == e.mu.data()[i]);
    }
    const MatrixXd rs = ranking_scores(e);
    for (Eigen::Index i = 0; i < rs.size(); ++i)
      CHECK(rs.data()[i] == (e.w_sparse.data()[i] != 0.0 ? e.importance.data()[i] : 0.0));
  }
}

TEST_CASE("sparsify threshold equals an exhaustive sweep") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(300 + seed);
    const MatrixXd act = test::gaussian(40, 5, rng);
    const MatrixXd mu = test::gaussian(3, 5, rng);
    const MatrixXd logits = act * mu.transpose() + 0.5 * test::gaussian(40, 3, rng);
    for (double kappa : {0.0, 0.02, 0.1, 0.5}) {
      const SparsifyResult r = sparsify(mu, act, logits, kappa);
      CHECK(r.threshold == sweep_threshold(mu, act, logits, kappa));
      CHECK(agreement(r.weights, act, logits) >= agreement(mu, act, logits) - kappa);
    }
  }
}

TEST_CASE("kappa 0 with every zeroing harmful keeps mu") {
  // Two labels, two concepts; each example's winner depends on both weights.
  MatrixXd act(4, 2);
  act << 1, -0.9, -0.9, 1, 1, 0.5, 0.5, 1;
  MatrixXd mu(2, 2);
  mu << 1, 0, 0, 1;
  MatrixXd logits = act * mu.transpose();
  // Removing either entry flips an example.
  mu << 1.0, 0.2, 0.2, 1.0;
  logits = act * mu.transpose();
  const SparsifyResult r = sparsify(mu, act, logits, 0.0);
  CHECK(r.threshold == sweep_threshold(mu, act, logits, 0.0));
  const MatrixXd w_small = (mu.array().abs() < 0.5).select(0.0, mu);
  if (agreement(w_small, act, logits) < 1.0) {
    CHECK(r.weights == mu);
  }
}

TEST_CASE("label driven by a single concept keeps only that weight at kappa 0.02") {
  Rng rng(12);
  const MatrixXd act = test::gaussian(200, 3, rng);
  MatrixXd logits(200, 2);
  logits.col(0) = 2.0 * act.col(1);
  logits.col(1) = -2.0 * act.col(1);
  const Posterior p = posterior(act, VectorXd::Constant(3, 1e-3), logits, 1.0, 1.0);
  const SparsifyResult r = sparsify(p.mu, act, logits, 0.02);
  CHECK(r.threshold == sweep_threshold(p.mu, act, logits, 0.02));
  CHECK(r.weights(0, 1) != 0.0);
  CHECK(r.weights(1, 1) != 0.0);
  CHECK(r.weights.col(0).isZero(0.0));
  CHECK(r.weights.col(2).isZero(0.0));
}

TEST_CASE("kappa 0.99 zeroes everything when the majority rate allows it") {
  Rng rng(13);
  const MatrixXd act = test::gaussian(50, 4, rng);
  const MatrixXd mu = test::gaussian(2, 4, rng);
  const MatrixXd logits = act * mu.transpose();
  const SparsifyResult r = sparsify(mu, act, logits, 0.99);
  CHECK(r.weights.isZero(0.0));
}

TEST_CASE("tuning objective: spectral evaluation equals direct solves") {
  const ProbeBundle b = test::random_bundle(40, 6, 2, 5, 8, 14, false);
  const ActivationStats st = compute_stats(b);
  const TuningObjective obj(st, to_double(b.logits), 4, 99);
  for (double lambda : {1e-3, 0.1, 1.0, 30.0})
    for (double beta : {1e-2, 0.5, 1.0, 20.0}) {
      const double a = obj(lambda, beta), d = obj.evaluate_direct(lambda, beta);
      CHECK(a == doctest::Approx(d).epsilon(1e-8));
    }
}

TEST_CASE("tuning noise draws lie within plus or minus s") {
  const ProbeBundle b = test::random_bundle(30, 4, 2, 5, 8, 15, false);
  const ActivationStats st = compute_stats(b);
  const TuningObjective obj(st, to_double(b.logits), 8, 3);
  REQUIRE(obj.noise().size() == 8);
  for (const auto& z : obj.noise()) CHECK((z.cwiseAbs() - st.s).maxCoeff() <= 0.0);
}

TEST_CASE("tuning is deterministic given the seed and improves the objective") {
  const ProbeBundle b = test::random_bundle(50, 6, 2, 5, 8, 16, false);
  const ActivationStats st = compute_stats(b);
  BayesConfig cfg;
  cfg.tune = true;
  cfg.seed = 42;
  const TuneResult a = tune_hyperparams(st, to_double(b.logits), cfg);
  const TuneResult c = tune_hyperparams(st, to_double(b.logits), cfg);
  CHECK(a.lambda == c.lambda);
  CHECK(a.beta == c.beta);
  const TuningObjective obj(st, to_double(b.logits), cfg.tune_noise_samples, cfg.seed);
  CHECK(a.objective >= obj(cfg.lambda, cfg.beta));
  CHECK(a.lambda >= BayesConfig::kLambdaMin);
  CHECK(a.lambda <= BayesConfig::kLambdaMax);
  CHECK(a.beta >= BayesConfig::kBetaMin);
  CHECK(a.beta <= BayesConfig::kBetaMax);
}

TEST_CASE("without noise, tuned beta reaches its bound and lambda stays put") {
  // repr = mm_image makes cos_alpha 1 and s 0; logits exactly linear in m.
  ProbeBundle b = test::random_bundle(40, 4, 2, 6, 6, 17, false);
  b.repr = b.mm_image;
  ActivationStats st = compute_stats(b);
  st.s.setZero();
  st.epsilon.setZero();
  Rng rng(18);
  const MatrixXd logits = st.m * test::gaussian(4, 2, rng);
  BayesConfig cfg;
  cfg.tune = true;
  cfg.tune_steps = 1000;
  cfg.lambda = 3.0;
  const TuneResult r = tune_hyperparams(st, logits, cfg);
  CHECK(r.beta == doctest::Approx(BayesConfig::kBetaMax).epsilon(1e-9));
  CHECK(r.lambda == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("configuration validation") {
  BayesConfig c;
  c.lambda = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.beta = -1;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.tune_steps = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK_THROWS_AS(SparsifyConfig{1.0}.validate(), UsageError);
  CHECK_THROWS_AS(SparsifyConfig{-0.1}.validate(), UsageError);
  CHECK_NOTHROW(SparsifyConfig{0.0}.validate());
}

TEST_CASE("non-finite inputs are numerical errors") {
  Instance in = random_instance(10, 3, 1, 19);
  in.y(2, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(posterior(in.c, in.eps, in.y, 1.0, 1.0), NumericalError);
}

}  // TEST_SUITE
