#include "uace/linalg.hpp"

#include "uace/error.hpp"
#include "uace/parallel.hpp"

#include <atomic>
#include <cmath>

namespace uace {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_thread_count(unsigned n) { g_threads = n; }

unsigned thread_count() {
  const unsigned n = g_threads.load();
  if (n != 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

MatrixXd row_normalized(const MatrixXd& m) {
  MatrixXd out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0) out.row(i) /= n;
  }
  return out;
}

NormalEquations::NormalEquations(const MatrixXd& a, double jitter) : a_(a) {
  MatrixXd gram = a.transpose() * a;
  ldlt_.compute(gram);
  const VectorXd d = ldlt_.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  const bool deficient = ldlt_.info() != Eigen::Success || !(dmax > 0) ||
                         d.minCoeff() <= 1e-12 * dmax;
  if (deficient) {
    const double tr = gram.trace();
    const double scale = tr > 0 ? tr / static_cast<double>(gram.rows()) : 1.0;
    gram.diagonal().array() += jitter * scale;
    ldlt_.compute(gram);
    jittered_ = true;
    if (ldlt_.info() != Eigen::Success)
      throw NumericalError("normal equations: factorization failed after jitter");
  }
}

MatrixXd NormalEquations::solve(const MatrixXd& rhs) const {
  return ldlt_.solve(a_.transpose() * rhs);
}

SpdFactor::SpdFactor(const MatrixXd& m) : llt_(m) {
  if (llt_.info() != Eigen::Success)
    throw NumericalError("matrix is not numerically positive definite");
}

MatrixXd SpdFactor::solve(const MatrixXd& rhs) const { return llt_.solve(rhs); }

VectorXd SpdFactor::inverse_diagonal() const {
  const auto n = llt_.matrixL().rows();
  // diag(M⁻¹) = column norms² of L⁻¹.
  MatrixXd linv = MatrixXd::Identity(n, n);
  llt_.matrixL().solveInPlace(linv);
  return linv.colwise().squaredNorm().transpose();
}

double cosine(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0 || nb == 0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace uace
