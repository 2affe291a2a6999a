#pragma once

#include <Eigen/Dense>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace uace {

// Scores for one label, standardized to rank positions.
struct RankedExplanation {
  std::vector<std::string> concept_names;  // input order
  Eigen::VectorXd raw_scores;              // input order
  Eigen::VectorXd rank_scores;             // input order; position / K, 0 = most important

  [[nodiscard]] std::size_t size() const { return concept_names.size(); }
  // Concept indices from most to least important.
  [[nodiscard]] std::vector<std::size_t> order() const;
};

// Sorts by descending raw score; equal scores ordered by byte-wise name.
RankedExplanation to_ranked(const std::vector<std::string>& names, const Eigen::VectorXd& scores);

// Mean |rank_a - rank_b| over the top-k concepts of `reference`.
// Concept name sets must match exactly.
double topk_abs_diff(const RankedExplanation& reference, const RankedExplanation& other,
                     std::size_t k);

// Fraction of discordant pairs among concepts present in both rankings,
// optionally restricted to `restrict_to`. 0 when fewer than two concepts remain.
double kendall_tau_distance(const RankedExplanation& a, const RankedExplanation& b,
                            const std::optional<std::set<std::string>>& restrict_to = std::nullopt);

// Jaccard similarity of the top-k index sets of two score vectors (larger
// is higher; ties to the lower index).
double jaccard_topk(const Eigen::VectorXd& u1, const Eigen::VectorXd& u2, std::size_t k);

double uncertainty_cos_sim(const Eigen::VectorXd& estimated, const Eigen::VectorXd& error_rate);

// Mean |rank_a - rank_b| over shared concepts with a nonzero raw score in
// either ranking. 0 when there are no such concepts.
double drift(const RankedExplanation& a, const RankedExplanation& b);

// Concepts with nonzero raw score, used to restrict Kendall comparisons.
std::set<std::string> nonzero_concepts(const RankedExplanation& r);

}  // namespace uace
