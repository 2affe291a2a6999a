#include "helpers.hpp"

#include "uace/baselines.hpp"
#include "uace/error.hpp"
#include "uace/parallel.hpp"

#include <doctest.h>

#include <numeric>

using namespace uace;

namespace {

// Accelerated projected gradient on the split form w = p - q, p, q >= 0:
//   min (1/2n)|yc - Xc (p - q)|^2 + alpha 1'(p + q)
// with centered data, then the intercept from the means.
std::pair<VectorXd, double> lasso_by_projection(const MatrixXd& x, const VectorXd& y, double alpha) {
  const auto n = static_cast<double>(x.rows());
  const auto d = x.cols();
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const double ym = y.mean();
  const MatrixXd xc = x.rowwise() - xm;
  const VectorXd yc = y.array() - ym;
  const MatrixXd gram = xc.transpose() * xc / n;
  const VectorXd xty = xc.transpose() * yc / n;
  const double lip = 2.0 * Eigen::SelfAdjointEigenSolver<MatrixXd>(gram).eigenvalues().maxCoeff() + 1e-12;
  VectorXd z = VectorXd::Zero(2 * d), u = z, prev = z;
  auto grad = [&](const VectorXd& v) {
    const VectorXd w = v.head(d) - v.tail(d);
    const VectorXd gw = gram * w - xty;
    VectorXd g(2 * d);
    g << gw.array() + alpha, -gw.array() + alpha;
    return g;
  };
  for (int it = 1; it < 2000000; ++it) {
    prev = u;
    u = (z - grad(z) / lip).cwiseMax(0.0);
    z = u + (static_cast<double>(it - 1) / (it + 2)) * (u - prev);
    const VectorXd step = (u - grad(u) / lip).cwiseMax(0.0) - u;
    if (step.cwiseAbs().maxCoeff() < 1e-15) break;
  }
  const VectorXd w = u.head(d) - u.tail(d);
  return {w, ym - xm.dot(w)};
}

void check_kkt(const MatrixXd& x, const VectorXd& y, const VectorXd& w, double b, double alpha) {
  const auto n = static_cast<double>(x.rows());
  const VectorXd r = y - x * w - VectorXd::Constant(x.rows(), b);
  CHECK(std::abs(r.sum()) <= 1e-8 * std::max(1.0, y.cwiseAbs().sum()));
  const VectorXd g = x.transpose() * r / n;  // minus the gradient of the loss
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w(j) == 0.0) {
      CHECK(std::abs(g(j)) <= alpha + 1e-6);
    } else {
      CHECK(g(j) == doctest::Approx(alpha * (w(j) > 0 ? 1.0 : -1.0)).epsilon(1e-6));
    }
  }
}

double accuracy(const LogisticFit& fit, const MatrixXd& x, const std::vector<int>& labels) {
  const MatrixXd s = (x * fit.weights.transpose()).rowwise() + fit.intercept.transpose();
  int hits = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    if (s.cols() == 1) {
      best = s(i, 0) > 0 ? 1 : 0;
    } else {
      s.row(i).maxCoeff(&best);
    }
    hits += best == labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

ProbeBundle permute_concepts(const ProbeBundle& b, const std::vector<int>& perm) {
  ProbeBundle p = b;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    p.concept_text.row(kk) = b.concept_text.row(perm[k]);
    p.concept_names[k] = b.concept_names[static_cast<std::size_t>(perm[k])];
    if (b.annotations) p.annotations->col(kk) = b.annotations->col(perm[k]);
  }
  return p;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("method names round-trip") {
  for (Method m : {Method::uace, Method::ols, Method::oracle, Method::ycbm, Method::ocbm, Method::tcav})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("lime"), UsageError);
}

TEST_CASE("lasso matches a projected-gradient solver (random 20x5)") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const MatrixXd x = test::gaussian(20, 5, rng);
    VectorXd w_true(5);
    w_true << 1.5, 0, -2, 0, 0.3;
    const VectorXd y = x * w_true + 0.1 * test::gaussian(20, 1, rng).col(0) + VectorXd::Constant(20, 0.7);
    for (double alpha : {1e-3, 0.05, 0.3}) {
      LassoOptions opt;
      opt.alpha = alpha;
      const LassoFit fit = lasso(x, y, opt);
      const auto [w, b] = lasso_by_projection(x, y, alpha);
      CHECK((fit.coef.row(0).transpose() - w).cwiseAbs().maxCoeff() <= 1e-5);
      CHECK(fit.intercept(0) == doctest::Approx(b).epsilon(1e-5));
      check_kkt(x, y, fit.coef.row(0).transpose(), fit.intercept(0), alpha);
    }
  }
}

TEST_CASE("lasso on an all-zero column gives exactly zero") {
  Rng rng(1);
  MatrixXd x = test::gaussian(30, 4, rng);
  x.col(2).setZero();
  const VectorXd y = x.col(0) - x.col(1);
  const LassoFit fit = lasso(x, y);
  CHECK(fit.coef(0, 2) == 0.0);
}

TEST_CASE("oracle: annotation equal to a scaled logit dominates; empty column is zero") {
  ProbeBundle b = test::random_bundle(60, 5, 2, 4, 6, 2);
  (*b.annotations).col(3).setZero();
  for (Eigen::Index i = 0; i < 60; ++i) b.logits(i, 0) = 4.0f * (*b.annotations)(i, 1);
  const BaselineReport r = oracle_explain(b);
  Eigen::Index best = 0;
  r.scores.row(0).cwiseAbs().maxCoeff(&best);
  CHECK(best == 1);
  CHECK(r.scores(0, 1) == doctest::Approx(4.0).epsilon(1e-2));
  CHECK(r.scores(0, 3) == 0.0);
  CHECK(r.scores(1, 3) == 0.0);
  CHECK(r.method == Method::oracle);
  CHECK(r.metadata.at("l1_strength") == 1e-3);
}

TEST_CASE("oracle requires annotations") {
  const ProbeBundle b = test::random_bundle(20, 3, 2, 4, 6, 3, false);
  CHECK_THROWS_AS(oracle_explain(b), ValidationError);
  CHECK_THROWS_AS(tcav_explain(b), ValidationError);
}

TEST_CASE("ycbm is lasso on cos_theta") {
  const ProbeBundle b = test::random_bundle(40, 4, 2, 4, 6, 4);
  const BaselineReport r = ycbm_explain(b, 0.01);
  const MatrixXd ct = cosine_matrix(to_double(b.mm_image), to_double(b.concept_text));
  for (Eigen::Index l = 0; l < 2; ++l) {
    const auto [w, b0] = lasso_by_projection(ct, to_double(b.logits).col(l), 0.01);
    CHECK((r.scores.row(l).transpose() - w).cwiseAbs().maxCoeff() <= 1e-5);
  }
}

TEST_CASE("ols recovers exact linear logits") {
  const ProbeBundle b = test::random_bundle(50, 6, 1, 8, 10, 5, false);
  const ActivationStats st = compute_stats(b);
  Rng rng(6);
  const MatrixXd w = test::gaussian(6, 2, rng);
  const BaselineReport r = ols_explain(st, st.m * w);
  CHECK((r.scores.transpose() - w).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(r.metadata.at("jitter") == 0.0);
}

TEST_CASE("multinomial logistic: separable data is fit and the gradient vanishes") {
  Rng rng(7);
  const MatrixXd x = test::gaussian(100, 3, rng);
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) labels[static_cast<std::size_t>(i)] = x(i, 0) + 0.5 * x(i, 1) > 0 ? 1 : 0;
  LogisticOptions opt;
  opt.l2 = 1e-3;
  const LogisticFit fit = multinomial_logistic(x, labels, 2, opt);
  CHECK(accuracy(fit, x, labels) >= 0.99);
  MatrixXd gw;
  VectorXd gb;
  multinomial_objective(x, labels, 2, opt.l2, fit.weights, fit.intercept, &gw, &gb);
  CHECK(std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff()) < 1e-4);
}

TEST_CASE("multinomial objective gradient matches finite differences") {
  Rng rng(8);
  const MatrixXd x = test::gaussian(30, 3, rng);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(3));
  const MatrixXd w = test::gaussian(3, 3, rng);
  const VectorXd b = test::gaussian(3, 1, rng).col(0);
  MatrixXd gw;
  VectorXd gb;
  multinomial_objective(x, labels, 3, 0.7, w, b, &gw, &gb);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) {
      MatrixXd wp = w, wm = w;
      wp(i, j) += h;
      wm(i, j) -= h;
      const double fd = (multinomial_objective(x, labels, 3, 0.7, wp, b) -
                         multinomial_objective(x, labels, 3, 0.7, wm, b)) / (2 * h);
      CHECK(gw(i, j) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("ocbm: gradient norm at the returned weights is below 1e-4") {
  const ProbeBundle b = test::random_bundle(80, 5, 3, 6, 8, 9, false);
  const BaselineReport r = ocbm_explain(b);
  CHECK(r.metadata.at("gradient_norm") < 1e-4);
  CHECK(r.scores.rows() == 3);
  CHECK(r.scores.cols() == 5);
}

TEST_CASE("ocbm rejects single-class probe labels") {
  ProbeBundle b = test::random_bundle(20, 3, 2, 4, 6, 10, false);
  b.logits.col(0).setConstant(5.0f);
  b.logits.col(1).setConstant(-5.0f);
  CHECK_THROWS_AS(ocbm_explain(b), ValidationError);
}

TEST_CASE("baselines permute with the concepts") {
  const ProbeBundle b = test::random_bundle(60, 5, 2, 6, 8, 11);
  const std::vector<int> perm{2, 4, 0, 1, 3};
  const ProbeBundle p = permute_concepts(b, perm);
  TcavOptions topt;
  topt.seed = 3;
  const std::vector<std::pair<BaselineReport, BaselineReport>> pairs{
      {ols_explain(compute_stats(b), to_double(b.logits)), ols_explain(compute_stats(p), to_double(p.logits))},
      {oracle_explain(b), oracle_explain(p)},
      {ycbm_explain(b), ycbm_explain(p)},
      {ocbm_explain(b), ocbm_explain(p)},
  };
  for (const auto& [a, c] : pairs) {
    CAPTURE(to_string(a.method));
    for (std::size_t k = 0; k < perm.size(); ++k)
      CHECK((c.scores.col(static_cast<Eigen::Index>(k)) - a.scores.col(perm[k])).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("tcav: concept aligned with the logit gradient scores 1") {
  Rng rng(12);
  const int n = 200;
  ProbeBundle b = test::random_bundle(n, 2, 2, 5, 6, 12);
  const MatrixXd repr = to_double(b.repr);
  VectorXd g(5);
  g << 1, -1, 0.5, 0, 0;
  const VectorXd logit = repr * g;
  for (int i = 0; i < n; ++i) {
    b.logits(i, 0) = static_cast<float>(logit(i));
    b.logits(i, 1) = static_cast<float>(-logit(i));
    (*b.annotations)(i, 0) = logit(i) > 0 ? 1 : 0;
  }
  TcavOptions opt;
  opt.seed = 1;
  const BaselineReport r = tcav_explain(b, opt);
  CHECK(r.scores(0, 0) == 1.0);
  CHECK(r.scores(1, 0) == 0.0);
  CHECK(r.seed == std::optional<std::uint64_t>(1));
}

TEST_CASE("tcav: concepts orthogonal to the gradient average about 0.5") {
  const int n = 200, d = 12, k = 40;
  ProbeBundle b = test::random_bundle(n, k, 2, d, 6, 13);
  const MatrixXd repr = to_double(b.repr);
  for (int i = 0; i < n; ++i) {
    b.logits(i, 0) = static_cast<float>(repr(i, 0));
    b.logits(i, 1) = static_cast<float>(-repr(i, 0));
  }
  // Concept c is the sign of a random direction in coordinates 1..d-1.
  Rng rng(14);
  for (int c = 0; c < k; ++c) {
    VectorXd h = test::gaussian(d, 1, rng).col(0);
    h(0) = 0;
    const VectorXd s = repr * h;
    for (int i = 0; i < n; ++i) (*b.annotations)(i, c) = s(i) > 0 ? 1 : 0;
  }
  TcavOptions opt;
  opt.seed = 2;
  const BaselineReport r = tcav_explain(b, opt);
  const double mean = r.scores.row(0).mean();
  CHECK(mean > 0.35);
  CHECK(mean < 0.65);
}

TEST_CASE("tcav: concepts with fewer than two positives or negatives are unscored") {
  ProbeBundle b = test::random_bundle(30, 4, 2, 4, 6, 15);
  (*b.annotations).col(0).setZero();
  (*b.annotations)(3, 0) = 1;
  (*b.annotations).col(2).setOnes();
  (*b.annotations)(0, 2) = 0;
  TcavOptions opt;
  opt.seed = 4;
  const BaselineReport r = tcav_explain(b, opt);
  CHECK_FALSE(r.scored[0]);
  CHECK(r.scored[1]);
  CHECK_FALSE(r.scored[2]);
  CHECK(r.scored[3]);
  CHECK(r.scores.col(0).isZero(0.0));
}

TEST_CASE("tcav is deterministic given the seed and independent of thread count") {
  const ProbeBundle b = test::random_bundle(60, 6, 2, 5, 6, 16);
  TcavOptions opt;
  opt.seed = 9;
  set_thread_count(1);
  const BaselineReport a = tcav_explain(b, opt);
  set_thread_count(4);
  const BaselineReport c = tcav_explain(b, opt);
  set_thread_count(0);
  CHECK(a.scores == c.scores);
}

TEST_CASE("argmax labels break ties toward the lower index") {
  MatrixXd l(3, 3);
  l << 1, 1, 0, 0, 2, 2, -1, -2, -1;
  CHECK(argmax_labels(l) == std::vector<int>{0, 1, 0});
}

}  // TEST_SUITE
