#include "uace/activation.hpp"

#include "uace/error.hpp"

#include <algorithm>
#include <cmath>

namespace uace {

MatrixXd cosine_matrix(const MatrixXd& images, const MatrixXd& concepts) {
  return row_normalized(images) * row_normalized(concepts).transpose();
}

// cos(alpha_k) is the best cosine achievable between a response vector t_k
// and any vector F v in the column span of the representation matrix F.
// For y in that span, y'P t = y't where P is the orthogonal projector, so
//   cos(y, t) = y'P t / (|y| |t|) <= |P t| / |t|
// by Cauchy-Schwarz, with equality at y = P t. The maximizer is therefore
// the least-squares fit v* of F v ~ t, and cos(alpha_k) = |F v*| / |t|.
AlphaFit fit_alpha(const MatrixXd& repr_normalized, const MatrixXd& responses) {
  if (repr_normalized.rows() < 2) throw ValidationError("fit_alpha: need at least 2 examples");
  if (repr_normalized.isZero(0.0)) throw ValidationError("repr: all-zero representation matrix");
  const auto k = responses.cols();
  const VectorXd t_norm = responses.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < k; ++j)
    if (!(t_norm(j) > 0))
      throw NumericalError("concept response degenerate for concept " + std::to_string(j));

  NormalEquations ne(repr_normalized);
  const MatrixXd coef = ne.solve(responses);  // d_f x K
  const MatrixXd fitted = repr_normalized * coef;

  AlphaFit out;
  out.cav = coef.transpose();
  out.cos_alpha.resize(k);
  for (Eigen::Index j = 0; j < k; ++j)
    out.cos_alpha(j) = std::clamp(fitted.col(j).norm() / t_norm(j), 0.0, 1.0);
  return out;
}

AlphaFit fit_alpha(const ProbeBundle& bundle) {
  const MatrixXd cos_theta = cosine_matrix(to_double(bundle.mm_image), to_double(bundle.concept_text));
  return fit_alpha(row_normalized(to_double(bundle.repr)), cos_theta);
}

ActivationStats assemble_stats(MatrixXd cos_theta, VectorXd cos_alpha) {
  ActivationStats st;
  const VectorXd sin_alpha = (1.0 - cos_alpha.array().square()).max(0.0).sqrt().matrix();
  const MatrixXd sin_theta = (1.0 - cos_theta.array().square()).max(0.0).sqrt().matrix();
  st.m = cos_theta * cos_alpha.asDiagonal();
  st.s = sin_theta * sin_alpha.asDiagonal();
  st.epsilon = st.s.colwise().mean().transpose();
  st.cos_theta = std::move(cos_theta);
  st.cos_alpha = std::move(cos_alpha);
  return st;
}

ActivationStats compute_stats(const MatrixXd& repr, const MatrixXd& mm_image,
                              const MatrixXd& concept_text) {
  const MatrixXd cos_theta = cosine_matrix(mm_image, concept_text);
  AlphaFit fit = fit_alpha(row_normalized(repr), cos_theta);
  return assemble_stats(cos_theta, std::move(fit.cos_alpha));
}

ActivationStats compute_stats(const ProbeBundle& bundle) {
  return compute_stats(to_double(bundle.repr), to_double(bundle.mm_image),
                       to_double(bundle.concept_text));
}

}  // namespace uace
