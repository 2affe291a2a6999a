#pragma once

#include "uace/bundle.hpp"

#include <Eigen/Dense>

namespace uace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd to_double(const MatrixF& m) { return m.cast<double>(); }

// Each row scaled to unit Euclidean norm. Zero rows stay zero.
MatrixXd row_normalized(const MatrixXd& m);

// Least-squares fits A x ~ b through the normal equations.
//
// The Gram matrix AᵀA is factored once (LDLᵀ). When it is numerically rank
// deficient, a ridge jitter of `jitter * trace(AᵀA) / d` is added to the
// diagonal and the factorization repeated, so the solve is always defined.
class NormalEquations {
 public:
  explicit NormalEquations(const MatrixXd& a, double jitter = 1e-8);

  // Coefficients for every column of `rhs` (N x m); returns d x m.
  [[nodiscard]] MatrixXd solve(const MatrixXd& rhs) const;

  [[nodiscard]] bool jittered() const { return jittered_; }

 private:
  MatrixXd a_;
  Eigen::LDLT<MatrixXd> ldlt_;
  bool jittered_ = false;
};

// Cholesky solve of a symmetric positive-definite system. Throws
// NumericalError when the matrix is not numerically positive definite.
class SpdFactor {
 public:
  explicit SpdFactor(const MatrixXd& m);
  [[nodiscard]] MatrixXd solve(const MatrixXd& rhs) const;
  [[nodiscard]] VectorXd inverse_diagonal() const;

 private:
  Eigen::LLT<MatrixXd> llt_;
};

// Cosine similarity; 0 when either vector is zero.
double cosine(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& b);

}  // namespace uace
