#pragma once

#include "uace/bundle.hpp"
#include "uace/linalg.hpp"

namespace uace {

// Concept activations with their error scale. All quantities are cosine
// based, so they are invariant to positive rescaling of any embedding row.
struct ActivationStats {
  MatrixXd m;          // N x K, mean activation cos(theta) * cos(alpha)
  MatrixXd s;          // N x K, noise scale |sin(theta)| * sin(alpha)
  MatrixXd cos_theta;  // N x K, cos-sim(text_k, image_i)
  VectorXd cos_alpha;  // K, fit quality of concept k in the task model
  VectorXd epsilon;    // K, column means of s

  [[nodiscard]] Eigen::Index n_examples() const { return m.rows(); }
  [[nodiscard]] Eigen::Index n_concepts() const { return m.cols(); }
};

struct AlphaFit {
  VectorXd cos_alpha;  // K
  MatrixXd cav;        // K x d_f, least-squares directions on row-normalized repr
};

// N x K matrix of cosine similarities between image rows and concept rows.
MatrixXd cosine_matrix(const MatrixXd& images, const MatrixXd& concepts);

AlphaFit fit_alpha(const ProbeBundle& bundle);

// Fit on an explicit (already row-normalized) representation and response
// matrix. Exposed for the Monte-Carlo variant, which refits on subsamples.
AlphaFit fit_alpha(const MatrixXd& repr_normalized, const MatrixXd& responses);

ActivationStats compute_stats(const ProbeBundle& bundle);

// Same computation on double-precision matrices, skipping the storage
// rounding of a bundle.
ActivationStats compute_stats(const MatrixXd& repr, const MatrixXd& mm_image,
                              const MatrixXd& concept_text);

// Assembles m, s and epsilon from cosine terms.
ActivationStats assemble_stats(MatrixXd cos_theta, VectorXd cos_alpha);

}  // namespace uace
