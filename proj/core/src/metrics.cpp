#include "uace/metrics.hpp"

#include "uace/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace uace {

std::vector<std::size_t> RankedExplanation::order() const {
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < size(); ++i) {
    idx[static_cast<std::size_t>(std::lround(rank_scores(static_cast<Eigen::Index>(i)) *
                                             static_cast<double>(size())))] = i;
  }
  return idx;
}

RankedExplanation to_ranked(const std::vector<std::string>& names, const Eigen::VectorXd& scores) {
  if (names.size() != static_cast<std::size_t>(scores.size())) {
    throw DimensionError("to_ranked: " + std::to_string(names.size()) + " names but " +
                         std::to_string(scores.size()) + " scores");
  }
  if (!scores.allFinite()) throw ValidationError("to_ranked: non-finite score");
  const std::size_t k = names.size();
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores(static_cast<Eigen::Index>(a));
    const double sb = scores(static_cast<Eigen::Index>(b));
    if (sa != sb) return sa > sb;
    return names[a] < names[b];
  });
  RankedExplanation r;
  r.concept_names = names;
  r.raw_scores = scores;
  r.rank_scores.resize(static_cast<Eigen::Index>(k));
  for (std::size_t pos = 0; pos < k; ++pos) {
    r.rank_scores(static_cast<Eigen::Index>(idx[pos])) =
        static_cast<double>(pos) / static_cast<double>(k);
  }
  return r;
}

namespace {

std::map<std::string, std::size_t> index_of(const RankedExplanation& r) {
  std::map<std::string, std::size_t> m;
  for (std::size_t i = 0; i < r.size(); ++i) m.emplace(r.concept_names[i], i);
  return m;
}

void require_same_names(const RankedExplanation& a, const RankedExplanation& b,
                        const char* what) {
  std::vector<std::string> na = a.concept_names;
  std::vector<std::string> nb = b.concept_names;
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  if (na != nb) throw ValidationError(std::string(what) + ": concept name sets differ");
}

double rank_of(const RankedExplanation& r, std::size_t i) {
  return r.rank_scores(static_cast<Eigen::Index>(i));
}

}  // namespace

double topk_abs_diff(const RankedExplanation& reference, const RankedExplanation& other,
                     std::size_t k) {
  require_same_names(reference, other, "topk_abs_diff");
  if (k == 0) throw ValidationError("topk_abs_diff: k must be >= 1");
  k = std::min(k, reference.size());
  const auto other_idx = index_of(other);
  const std::vector<std::size_t> order = reference.order();
  double total = 0;
  for (std::size_t pos = 0; pos < k; ++pos) {
    const std::size_t i = order[pos];
    total += std::abs(rank_of(reference, i) - rank_of(other, other_idx.at(reference.concept_names[i])));
  }
  return total / static_cast<double>(k);
}

double kendall_tau_distance(const RankedExplanation& a, const RankedExplanation& b,
                            const std::optional<std::set<std::string>>& restrict_to) {
  const auto b_idx = index_of(b);
  std::vector<std::pair<double, double>> ranks;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::string& name = a.concept_names[i];
    const auto it = b_idx.find(name);
    if (it == b_idx.end()) continue;
    if (restrict_to && restrict_to->count(name) == 0) continue;
    ranks.emplace_back(rank_of(a, i), rank_of(b, it->second));
  }
  const std::size_t n = ranks.size();
  if (n < 2) return 0.0;
  // Sort by the first ranking and count inversions of the second by merge sort.
  std::sort(ranks.begin(), ranks.end());
  std::vector<double> seq(n);
  for (std::size_t i = 0; i < n; ++i) seq[i] = ranks[i].second;
  std::vector<double> buf(n);
  std::uint64_t inversions = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo;
      std::size_t j = mid;
      std::size_t out = lo;
      while (i < mid && j < hi) {
        if (seq[j] < seq[i]) {
          inversions += mid - i;
          buf[out++] = seq[j++];
        } else {
          buf[out++] = seq[i++];
        }
      }
      while (i < mid) buf[out++] = seq[i++];
      while (j < hi) buf[out++] = seq[j++];
    }
    std::swap(seq, buf);
  }
  return static_cast<double>(inversions) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double jaccard_topk(const Eigen::VectorXd& u1, const Eigen::VectorXd& u2, std::size_t k) {
  if (u1.size() != u2.size()) throw DimensionError("jaccard_topk: length mismatch");
  if (k == 0) throw ValidationError("jaccard_topk: k must be >= 1");
  const auto n = static_cast<std::size_t>(u1.size());
  k = std::min(k, n);
  if (k == 0) return 1.0;
  auto top = [&](const Eigen::VectorXd& u) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return u(static_cast<Eigen::Index>(a)) > u(static_cast<Eigen::Index>(b));
    });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  const auto s1 = top(u1);
  const auto s2 = top(u2);
  std::vector<std::size_t> inter;
  std::set_intersection(s1.begin(), s1.end(), s2.begin(), s2.end(), std::back_inserter(inter));
  return static_cast<double>(inter.size()) / static_cast<double>(2 * k - inter.size());
}

double uncertainty_cos_sim(const Eigen::VectorXd& estimated, const Eigen::VectorXd& error_rate) {
  if (estimated.size() != error_rate.size()) {
    throw DimensionError("uncertainty_cos_sim: length mismatch");
  }
  const double denom = estimated.norm() * error_rate.norm();
  if (denom == 0) throw NumericalError("uncertainty_cos_sim: zero vector");
  return estimated.dot(error_rate) / denom;
}

double drift(const RankedExplanation& a, const RankedExplanation& b) {
  const auto b_idx = index_of(b);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto it = b_idx.find(a.concept_names[i]);
    if (it == b_idx.end()) continue;
    if (a.raw_scores(static_cast<Eigen::Index>(i)) == 0 &&
        b.raw_scores(static_cast<Eigen::Index>(it->second)) == 0) {
      continue;
    }
    total += std::abs(rank_of(a, i) - rank_of(b, it->second));
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::set<std::string> nonzero_concepts(const RankedExplanation& r) {
  std::set<std::string> out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r.raw_scores(static_cast<Eigen::Index>(i)) != 0) out.insert(r.concept_names[i]);
  }
  return out;
}

}  // namespace uace
