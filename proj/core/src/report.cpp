#include "uace/report.hpp"

#include "uace/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace uace {

namespace {

constexpr int kSchemaVersion = 1;
constexpr const char* kFormat = "uace-report";

using nlohmann::json;

}  // namespace

std::size_t ExplanationReport::label_index(const std::string& name) const {
  for (std::size_t i = 0; i < label_names.size(); ++i) {
    if (label_names[i] == name) return i;
  }
  throw ValidationError("report has no label '" + name + "'");
}

RankedExplanation ExplanationReport::ranked(std::size_t label) const {
  if (label >= label_names.size()) throw ValidationError("label index out of range");
  return to_ranked(concept_names, score.row(static_cast<Eigen::Index>(label)).transpose());
}

ExplanationReport make_report(const PosteriorExplanation& e, const ProbeBundle& bundle,
                              const BayesConfig& config, const SparsifyConfig& sparsify_config) {
  ExplanationReport r;
  r.method = "uace";
  r.config = {{"lambda", config.lambda},
              {"beta", config.beta},
              {"tune", config.tune ? 1.0 : 0.0},
              {"tune_steps", config.tune_steps},
              {"tune_lr", config.tune_lr},
              {"tune_noise_samples", config.tune_noise_samples},
              {"kappa", sparsify_config.kappa},
              {"lambda_used", e.lambda_used},
              {"beta_used", e.beta_used},
              {"sparsify_threshold", e.sparsify_threshold},
              {"tune_objective", e.tune_objective}};
  r.seed = config.seed;
  r.concept_names = bundle.concept_names;
  r.label_names = bundle.label_names;
  r.score = ranking_scores(e);
  r.scored.assign(bundle.concept_names.size(), true);
  r.mu = e.mu;
  r.sigma = e.sigma_diag.array().sqrt().matrix();
  r.importance = e.importance;
  r.sparse = e.w_sparse;
  return r;
}

ExplanationReport make_report(const BaselineReport& b, const ProbeBundle& bundle) {
  ExplanationReport r;
  r.method = to_string(b.method);
  r.config = b.metadata;
  r.seed = b.seed;
  r.concept_names = bundle.concept_names;
  r.label_names = bundle.label_names;
  r.score = b.scores;
  r.scored = b.scored;
  return r;
}

std::string to_json(const ExplanationReport& r) {
  json j;
  j["format"] = kFormat;
  j["schema_version"] = kSchemaVersion;
  j["method"] = r.method;
  j["config"] = r.config;
  j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
  j["concepts"] = r.concept_names;
  json labels = json::array();
  for (std::size_t l = 0; l < r.label_names.size(); ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    json rows = json::array();
    for (std::size_t k = 0; k < r.concept_names.size(); ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      json c;
      c["concept"] = r.concept_names[k];
      c["score"] = r.score(li, ki);
      if (!r.scored[k]) c["scored"] = false;
      if (r.mu) {
        c["mu"] = (*r.mu)(li, ki);
        c["sigma"] = (*r.sigma)(li, ki);
        c["importance"] = (*r.importance)(li, ki);
        c["sparse"] = (*r.sparse)(li, ki);
      }
      rows.push_back(std::move(c));
    }
    labels.push_back(json{{"label", r.label_names[l]}, {"concepts", std::move(rows)}});
  }
  j["labels"] = std::move(labels);
  return j.dump(2) + "\n";
}

ExplanationReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kFormat) throw ValidationError("not a uace report");
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw ValidationError("unsupported report schema_version");
    }
    ExplanationReport r;
    r.method = j.at("method").get<std::string>();
    r.config = j.at("config").get<std::map<std::string, double>>();
    if (!j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
    r.concept_names = j.at("concepts").get<std::vector<std::string>>();
    const auto& labels = j.at("labels");
    const auto n_labels = static_cast<Eigen::Index>(labels.size());
    const auto n_concepts = static_cast<Eigen::Index>(r.concept_names.size());
    r.score.resize(n_labels, n_concepts);
    r.scored.assign(r.concept_names.size(), true);
    const bool has_posterior = r.method == "uace";
    if (has_posterior) {
      r.mu = MatrixXd(n_labels, n_concepts);
      r.sigma = MatrixXd(n_labels, n_concepts);
      r.importance = MatrixXd(n_labels, n_concepts);
      r.sparse = MatrixXd(n_labels, n_concepts);
    }
    for (Eigen::Index l = 0; l < n_labels; ++l) {
      const auto& entry = labels.at(static_cast<std::size_t>(l));
      r.label_names.push_back(entry.at("label").get<std::string>());
      const auto& rows = entry.at("concepts");
      if (static_cast<Eigen::Index>(rows.size()) != n_concepts) {
        throw DimensionError("report label '" + r.label_names.back() + "' has " +
                             std::to_string(rows.size()) + " concepts, expected " +
                             std::to_string(n_concepts));
      }
      for (Eigen::Index k = 0; k < n_concepts; ++k) {
        const auto& c = rows.at(static_cast<std::size_t>(k));
        if (c.at("concept").get<std::string>() != r.concept_names[static_cast<std::size_t>(k)]) {
          throw ValidationError("report concept order differs between labels");
        }
        r.score(l, k) = c.at("score").get<double>();
        if (c.contains("scored") && !c.at("scored").get<bool>()) {
          r.scored[static_cast<std::size_t>(k)] = false;
        }
        if (has_posterior) {
          (*r.mu)(l, k) = c.at("mu").get<double>();
          (*r.sigma)(l, k) = c.at("sigma").get<double>();
          (*r.importance)(l, k) = c.at("importance").get<double>();
          (*r.sparse)(l, k) = c.at("sparse").get<double>();
        }
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

void write_report(const ExplanationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_json(report);
  if (!out) throw IoError("write failed for " + path.string());
}

ExplanationReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open report " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

}  // namespace uace
