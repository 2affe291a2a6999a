#include "uace/baselines.hpp"

#include "uace/error.hpp"
#include "uace/optim.hpp"
#include "uace/parallel.hpp"
#include "uace/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uace {

std::string to_string(Method m) {
  switch (m) {
    case Method::uace: return "uace";
    case Method::ols: return "ols";
    case Method::oracle: return "oracle";
    case Method::ycbm: return "ycbm";
    case Method::ocbm: return "ocbm";
    case Method::tcav: return "tcav";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::uace, Method::ols, Method::oracle, Method::ycbm, Method::ocbm,
                   Method::tcav}) {
    if (to_string(m) == s) return m;
  }
  throw UsageError("unknown method '" + s + "'");
}

std::vector<int> argmax_labels(const MatrixXd& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

LassoFit lasso(const MatrixXd& x, const MatrixXd& targets, const LassoOptions& options) {
  if (x.rows() != targets.rows()) throw DimensionError("lasso: row count mismatch");
  if (x.rows() == 0) throw ValidationError("lasso: no examples");
  if (!(options.alpha >= 0)) throw ValidationError("lasso: l1 strength must be >= 0");
  const auto n = static_cast<double>(x.rows());
  const Eigen::Index d = x.cols();

  const VectorXd x_mean = x.colwise().mean();
  const MatrixXd xc = x.rowwise() - x_mean.transpose();
  const MatrixXd gram = (xc.transpose() * xc) / n;

  LassoFit fit;
  fit.coef = MatrixXd::Zero(targets.cols(), d);
  fit.intercept = VectorXd::Zero(targets.cols());
  std::vector<int> sweeps(static_cast<std::size_t>(targets.cols()), 0);

  parallel_for(static_cast<std::size_t>(targets.cols()), [&](std::size_t l) {
    const auto col = static_cast<Eigen::Index>(l);
    const double y_mean = targets.col(col).mean();
    const VectorXd corr = xc.transpose() * (targets.col(col).array() - y_mean).matrix() / n;
    VectorXd w = VectorXd::Zero(d);
    VectorXd gw = VectorXd::Zero(d);  // gram * w
    int sweep = 0;
    for (; sweep < options.max_sweeps; ++sweep) {
      double max_change = 0;
      double max_w = 0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double gjj = gram(j, j);
        if (gjj <= 0) continue;
        const double old = w(j);
        const double rho = corr(j) - gw(j) + gjj * old;
        const double next = soft_threshold(rho, options.alpha) / gjj;
        if (next != old) {
          gw.noalias() += gram.col(j) * (next - old);
          w(j) = next;
        }
        max_change = std::max(max_change, std::abs(next - old));
        max_w = std::max(max_w, std::abs(next));
      }
      if (max_change <= options.tolerance * std::max(1.0, max_w)) {
        ++sweep;
        break;
      }
    }
    fit.coef.row(col) = w.transpose();
    fit.intercept(col) = y_mean - x_mean.dot(w);
    sweeps[l] = sweep;
  });
  fit.sweeps = *std::max_element(sweeps.begin(), sweeps.end());
  return fit;
}

double multinomial_objective(const MatrixXd& x, const std::vector<int>& labels, int classes,
                             double l2, const MatrixXd& weights, const VectorXd& intercept,
                             MatrixXd* grad_weights, VectorXd* grad_intercept) {
  const auto n = static_cast<double>(x.rows());
  MatrixXd z = x * weights.transpose();
  z.rowwise() += intercept.transpose();
  double loss = 0;
  MatrixXd resid(x.rows(), classes);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double zmax = z.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (z.row(i).array() - zmax).exp();
    const double sum = e.sum();
    const int yi = labels[static_cast<std::size_t>(i)];
    loss += zmax + std::log(sum) - z(i, yi);
    resid.row(i) = e / sum;
    resid(i, yi) -= 1.0;
  }
  loss = loss / n + 0.5 * l2 / n * weights.squaredNorm();
  if (grad_weights != nullptr) *grad_weights = (resid.transpose() * x) / n + (l2 / n) * weights;
  if (grad_intercept != nullptr) *grad_intercept = resid.colwise().sum().transpose() / n;
  return loss;
}

namespace {

LogisticFit fit_logistic(const MatrixXd& x, const std::vector<int>& labels, int classes,
                         bool binary, const LogisticOptions& options) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw DimensionError("logistic: label count mismatch");
  }
  const Eigen::Index d = x.cols();
  const int rows = binary ? 1 : classes;
  const Eigen::Index nw = rows * d;

  // Binary fits use the sigmoid parametrization, which is the two-class
  // softmax with the second class pinned at zero.
  auto unpack = [&](const VectorXd& p, MatrixXd& w, VectorXd& b) {
    w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        p.data(), rows, d);
    b = p.tail(rows);
  };
  GradientObjective f = [&](const VectorXd& p, VectorXd& grad) {
    MatrixXd w;
    VectorXd b;
    unpack(p, w, b);
    MatrixXd gw;
    VectorXd gb;
    double value = 0;
    if (binary) {
      MatrixXd w2 = MatrixXd::Zero(2, d);
      w2.row(1) = w.row(0);
      VectorXd b2(2);
      b2 << 0.0, b(0);
      MatrixXd gw2;
      VectorXd gb2;
      value = multinomial_objective(x, labels, 2, options.l2, w2, b2, &gw2, &gb2);
      gw = gw2.row(1);
      gb = gb2.tail(1);
    } else {
      value = multinomial_objective(x, labels, classes, options.l2, w, b, &gw, &gb);
    }
    grad.resize(nw + rows);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        grad.data(), rows, d) = gw;
    grad.tail(rows) = gb;
    return value;
  };
  LbfgsOptions lopt;
  lopt.max_iterations = options.max_iterations;
  lopt.gradient_tolerance = options.gradient_tolerance;
  const LbfgsResult r = minimize_lbfgs(f, VectorXd::Zero(nw + rows), lopt);
  if (!r.x.allFinite()) throw NumericalError("logistic regression diverged");
  LogisticFit fit;
  unpack(r.x, fit.weights, fit.intercept);
  fit.gradient_norm = r.gradient_norm;
  fit.iterations = r.iterations;
  return fit;
}

}  // namespace

LogisticFit multinomial_logistic(const MatrixXd& x, const std::vector<int>& labels, int classes,
                                 const LogisticOptions& options) {
  for (int y : labels) {
    if (y < 0 || y >= classes) throw ValidationError("logistic: label out of range");
  }
  return fit_logistic(x, labels, classes, false, options);
}

LogisticFit binary_logistic(const MatrixXd& x, const std::vector<int>& labels,
                            const LogisticOptions& options) {
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("logistic: binary labels must be 0 or 1");
  }
  return fit_logistic(x, labels, 2, true, options);
}

BaselineReport ols_explain(const ActivationStats& stats, const MatrixXd& logits) {
  if (stats.m.rows() != logits.rows()) throw DimensionError("ols: row count mismatch");
  const NormalEquations ne(stats.m, 1e-10);
  BaselineReport r;
  r.method = Method::ols;
  r.scores = ne.solve(logits).transpose();
  if (!r.scores.allFinite()) throw NumericalError("ols: non-finite coefficients");
  r.scored.assign(static_cast<std::size_t>(stats.n_concepts()), true);
  r.metadata["jitter"] = ne.jittered() ? 1e-10 : 0.0;
  return r;
}

namespace {

BaselineReport lasso_report(Method method, const MatrixXd& features, const MatrixXd& logits,
                            double l1_strength) {
  LassoOptions opt;
  opt.alpha = l1_strength;
  const LassoFit fit = lasso(features, logits, opt);
  BaselineReport r;
  r.method = method;
  r.scores = fit.coef;
  r.scored.assign(static_cast<std::size_t>(features.cols()), true);
  r.metadata["l1_strength"] = l1_strength;
  r.metadata["tolerance"] = opt.tolerance;
  r.metadata["max_sweeps"] = opt.max_sweeps;
  r.metadata["sweeps"] = fit.sweeps;
  return r;
}

}  // namespace

BaselineReport oracle_explain(const ProbeBundle& bundle, double l1_strength) {
  validate(bundle);
  if (!bundle.annotations) throw ValidationError("oracle: bundle has no annotations");
  return lasso_report(Method::oracle, bundle.annotations->cast<double>(), to_double(bundle.logits),
                      l1_strength);
}

BaselineReport ycbm_explain(const ProbeBundle& bundle, double l1_strength) {
  validate(bundle);
  const MatrixXd cos_theta =
      cosine_matrix(to_double(bundle.mm_image), to_double(bundle.concept_text));
  return lasso_report(Method::ycbm, cos_theta, to_double(bundle.logits), l1_strength);
}

BaselineReport ocbm_explain(const ProbeBundle& bundle, double l2_strength) {
  validate(bundle);
  if (!(l2_strength >= 0)) throw ValidationError("ocbm: l2 strength must be >= 0");
  const MatrixXd logits = to_double(bundle.logits);
  const std::vector<int> labels = argmax_labels(logits);
  if (std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels.front(); })) {
    throw ValidationError("ocbm: probe labels contain a single class");
  }
  const AlphaFit alpha = fit_alpha(bundle);
  const MatrixXd act = row_normalized(to_double(bundle.repr)) * alpha.cav.transpose();
  LogisticOptions opt;
  opt.l2 = l2_strength;
  const LogisticFit fit =
      multinomial_logistic(act, labels, static_cast<int>(bundle.n_labels()), opt);
  BaselineReport r;
  r.method = Method::ocbm;
  r.scores = fit.weights;
  r.scored.assign(static_cast<std::size_t>(bundle.n_concepts()), true);
  r.metadata["l2_strength"] = l2_strength;
  r.metadata["iterations"] = fit.iterations;
  r.metadata["max_iterations"] = opt.max_iterations;
  r.metadata["gradient_norm"] = fit.gradient_norm;
  return r;
}

BaselineReport tcav_explain(const ProbeBundle& bundle, const TcavOptions& options) {
  validate(bundle);
  if (!bundle.annotations) throw ValidationError("tcav: bundle has no annotations");
  if (options.repeats < 1) throw ValidationError("tcav: repeats must be >= 1");
  if (!(options.subsample_fraction > 0 && options.subsample_fraction <= 1)) {
    throw ValidationError("tcav: subsample fraction must be in (0, 1]");
  }
  const MatrixXd repr = to_double(bundle.repr);
  const MatrixXd logits = to_double(bundle.logits);
  const Eigen::Index n = repr.rows();
  const Eigen::Index d = repr.cols();
  const Eigen::Index k_count = bundle.n_concepts();

  // Logit gradients from the least-squares affine map repr -> logits.
  MatrixXd design(n, d + 1);
  design << repr, VectorXd::Ones(n);
  const MatrixXd grad = NormalEquations(design, 1e-10).solve(logits).topRows(d);  // d x L

  const auto sub = std::max<Eigen::Index>(
      2, static_cast<Eigen::Index>(std::floor(options.subsample_fraction * static_cast<double>(n))));

  BaselineReport r;
  r.method = Method::tcav;
  r.scores = MatrixXd::Zero(bundle.n_labels(), k_count);
  std::vector<char> scored(static_cast<std::size_t>(k_count), 0);
  LogisticOptions lopt;
  lopt.l2 = options.l2;

  parallel_for(static_cast<std::size_t>(k_count), [&](std::size_t kk) {
    const auto k = static_cast<Eigen::Index>(kk);
    std::vector<int> labels(static_cast<std::size_t>(n));
    int positives = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      labels[static_cast<std::size_t>(i)] = (*bundle.annotations)(i, k) != 0 ? 1 : 0;
      positives += labels[static_cast<std::size_t>(i)];
    }
    if (positives < 2 || n - positives < 2) return;
    scored[kk] = 1;
    Rng rng(derive_seed(options.seed, kk));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    VectorXd positive_count = VectorXd::Zero(bundle.n_labels());
    for (int rep = 0; rep < options.repeats; ++rep) {
      // Partial Fisher-Yates for a subsample without replacement.
      for (Eigen::Index i = 0; i < sub; ++i) {
        const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      }
      MatrixXd xs(sub, d);
      std::vector<int> ys(static_cast<std::size_t>(sub));
      for (Eigen::Index i = 0; i < sub; ++i) {
        xs.row(i) = repr.row(idx[static_cast<std::size_t>(i)]);
        ys[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      }
      // A subsample can lose one class; that repetition falls back to the full set.
      const int sub_pos = std::accumulate(ys.begin(), ys.end(), 0);
      const LogisticFit fit = (sub_pos == 0 || sub_pos == static_cast<int>(sub))
                                  ? binary_logistic(repr, labels, lopt)
                                  : binary_logistic(xs, ys, lopt);
      const VectorXd cav = fit.weights.row(0).transpose();
      // The linear head gives one gradient for every example, so the
      // per-example fraction is 0 or 1 for each CAV.
      for (Eigen::Index y = 0; y < bundle.n_labels(); ++y) {
        if (grad.col(y).dot(cav) > 0) positive_count(y) += 1.0;
      }
    }
    r.scores.col(k) = positive_count / static_cast<double>(options.repeats);
  });
  r.scored.assign(scored.begin(), scored.end());
  r.metadata["repeats"] = options.repeats;
  r.metadata["subsample_fraction"] = options.subsample_fraction;
  r.metadata["l2_strength"] = options.l2;
  r.seed = options.seed;
  return r;
}

}  // namespace uace
