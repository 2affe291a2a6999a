#pragma once

#include "uace/baselines.hpp"
#include "uace/estimator.hpp"
#include "uace/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace uace {

// Explanation as written to disk. `score` is the value every comparison
// ranks by: the masked importance for U-ACE (importance where the sparse
// weight is nonzero, 0 elsewhere) and the method's own score otherwise.
struct ExplanationReport {
  std::string method;
  std::map<std::string, double> config;  // fully resolved settings
  std::optional<std::uint64_t> seed;
  std::vector<std::string> concept_names;  // K
  std::vector<std::string> label_names;    // L
  MatrixXd score;                          // L x K
  std::vector<bool> scored;                // K

  // U-ACE only.
  std::optional<MatrixXd> mu;
  std::optional<MatrixXd> sigma;  // posterior standard deviation
  std::optional<MatrixXd> importance;
  std::optional<MatrixXd> sparse;

  [[nodiscard]] std::size_t label_index(const std::string& name) const;
  [[nodiscard]] RankedExplanation ranked(std::size_t label) const;
};

ExplanationReport make_report(const PosteriorExplanation& e, const ProbeBundle& bundle,
                              const BayesConfig& config, const SparsifyConfig& sparsify_config);
ExplanationReport make_report(const BaselineReport& r, const ProbeBundle& bundle);

// Deterministic serialization: identical reports give identical bytes.
std::string to_json(const ExplanationReport& report);
ExplanationReport report_from_json(const std::string& text);

void write_report(const ExplanationReport& report, const std::filesystem::path& path);
ExplanationReport read_report(const std::filesystem::path& path);

}  // namespace uace
