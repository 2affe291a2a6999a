#include "uace/optim.hpp"

#include "uace/error.hpp"

#include <cmath>
#include <deque>

namespace uace {

LbfgsResult minimize_lbfgs(const GradientObjective& f, Eigen::VectorXd x, const LbfgsOptions& opt) {
  using Eigen::VectorXd;
  VectorXd g(x.size());
  double fx = f(x, g);
  if (!std::isfinite(fx)) throw NumericalError("L-BFGS: objective non-finite at start");

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  LbfgsResult r;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (g.cwiseAbs().maxCoeff() <= opt.gradient_tolerance) {
      r.converged = true;
      break;
    }
    // Two-loop recursion.
    VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(q);
      q += s_hist[i] * (alpha[i] - b);
    }
    VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0)) {
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / g.cwiseAbs().maxCoeff()) : 1.0;
    VectorXd xn, gn(x.size());
    double fn = 0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + step * dir;
      fn = f(xn, gn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further progress possible at working precision
    VectorXd s = xn - x, y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = std::move(xn);
    g = gn;
    fx = fn;
  }
  r.x = std::move(x);
  r.value = fx;
  r.gradient_norm = g.cwiseAbs().maxCoeff();
  r.converged = r.converged || r.gradient_norm <= opt.gradient_tolerance;
  r.iterations = it;
  return r;
}

}  // namespace uace
