#include "cli.hpp"

#include "uace/activation.hpp"
#include "uace/baselines.hpp"
#include "uace/bundle.hpp"
#include "uace/error.hpp"
#include "uace/estimator.hpp"
#include "uace/metrics.hpp"
#include "uace/parallel.hpp"
#include "uace/report.hpp"
#include "uace/synthetic.hpp"
#include "uace/uncertainty.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace uace::cli {
namespace {

using nlohmann::json;
constexpr int kSchemaVersion = 1;

// Config files are JSON objects mirroring the flags: top-level keys set
// global options, nested objects set options of the subcommand with that name.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    throw CLI::ConfigError("writing config files is not supported");
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConfigError("config values must be scalars or arrays of scalars");
  }

  static void flatten(const json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        flatten(value, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const std::string& what) {
  if (flag) return *flag;
  if (const char* env = std::getenv("UACE_SEED"); env != nullptr && *env != '\0') {
    const std::string s(env);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw UsageError("UACE_SEED is not an unsigned integer: " + s);
    }
    return v;
  }
  throw UsageError(what + " is stochastic: pass --seed or set UACE_SEED");
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << text;
  if (!f) throw IoError("write failed: " + path);
}

// ---- validate ---------------------------------------------------------------

struct ValidateArgs {
  std::string bundle;
};

void cmd_validate(const ValidateArgs& a, std::ostream& out) {
  const ProbeBundle b = read_bundle(a.bundle);
  json j{{"format", "uace-validate"},
         {"schema_version", kSchemaVersion},
         {"valid", true},
         {"n_examples", b.n_examples()},
         {"n_concepts", b.n_concepts()},
         {"n_labels", b.n_labels()},
         {"repr_dim", b.repr.cols()},
         {"mm_dim", b.mm_image.cols()},
         {"annotations", b.annotations.has_value()}};
  out << j.dump(2) << "\n";
}

// ---- stats ------------------------------------------------------------------

struct StatsArgs {
  std::string bundle;
  std::string out_dir;
};

void cmd_stats(const StatsArgs& a, std::ostream& out) {
  const ProbeBundle b = read_bundle(a.bundle);
  const ActivationStats st = compute_stats(b);
  if (!a.out_dir.empty()) {
    write_matrix_dir(a.out_dir, "activation_stats",
                     {{"m", st.m},
                      {"s", st.s},
                      {"cos_theta", st.cos_theta},
                      {"cos_alpha", st.cos_alpha},
                      {"epsilon", st.epsilon}},
                     b.concept_names);
  }
  json rows = json::array();
  for (std::size_t k = 0; k < b.concept_names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    rows.push_back(json{{"concept", b.concept_names[k]},
                        {"cos_alpha", st.cos_alpha(kk)},
                        {"epsilon", st.epsilon(kk)},
                        {"mean_activation", st.m.col(kk).mean()}});
  }
  json j{{"format", "uace-stats"}, {"schema_version", kSchemaVersion}, {"concepts", rows}};
  out << j.dump(2) << "\n";
}

// ---- explain ----------------------------------------------------------------

struct ExplainArgs {
  std::string bundle;
  std::string method = "uace";
  BayesConfig bayes;
  SparsifyConfig sparsify;
  double l1 = 1e-3;
  double l2 = 1.0;
  TcavOptions tcav;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void cmd_explain(ExplainArgs a, std::ostream& out) {
  const Method method = method_from_string(a.method);
  const ProbeBundle b = read_bundle(a.bundle);
  ExplanationReport report;
  switch (method) {
    case Method::uace: {
      a.bayes.seed = a.bayes.tune ? resolve_seed(a.seed, "explain --method uace --tune")
                                  : a.seed.value_or(0);
      const PosteriorExplanation e = explain(b, a.bayes, a.sparsify);
      report = make_report(e, b, a.bayes, a.sparsify);
      break;
    }
    case Method::ols:
      report = make_report(ols_explain(compute_stats(b), to_double(b.logits)), b);
      break;
    case Method::oracle: report = make_report(oracle_explain(b, a.l1), b); break;
    case Method::ycbm: report = make_report(ycbm_explain(b, a.l1), b); break;
    case Method::ocbm: report = make_report(ocbm_explain(b, a.l2), b); break;
    case Method::tcav:
      a.tcav.seed = resolve_seed(a.seed, "explain --method tcav");
      report = make_report(tcav_explain(b, a.tcav), b);
      break;
  }
  emit(to_json(report), a.out, out);
}

// ---- uncertainty ------------------------------------------------------------

struct UncertaintyArgs {
  std::string bundle;
  std::string method = "prop1";
  VariantConfig variant;
  bool evaluate = false;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void cmd_uncertainty(UncertaintyArgs a, std::ostream& out) {
  const ProbeBundle b = read_bundle(a.bundle);
  json config;
  std::optional<std::uint64_t> seed;
  VectorXd eps;
  if (a.method == "prop1") {
    eps = compute_stats(b).epsilon;
  } else if (a.method == "mc") {
    seed = resolve_seed(a.seed, "uncertainty --method mc");
    a.variant.seed = *seed;
    eps = mc_uncertainty(b, a.variant);
    config = {{"n_samples", a.variant.n_samples},
              {"subsample_fraction", a.variant.subsample_fraction}};
  } else if (a.method == "df") {
    const DistributionFit fit = distribution_fit(b, a.variant);
    eps = fit.epsilon;
    config = {{"df_steps", a.variant.df_steps},
              {"df_lr", a.variant.df_lr},
              {"df_beta", a.variant.df_beta},
              {"final_loss", fit.loss_history.empty() ? 0.0 : fit.loss_history.back()}};
  } else {
    throw UsageError("unknown uncertainty method: " + a.method);
  }
  if (config.is_null()) config = json::object();

  const RankedExplanation ranked = to_ranked(b.concept_names, eps);
  json rows = json::array();
  for (std::size_t k = 0; k < b.concept_names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    rows.push_back(json{{"concept", b.concept_names[k]},
                        {"epsilon", eps(kk)},
                        {"rank", ranked.rank_scores(kk)}});
  }
  json j{{"format", "uace-uncertainty"},
         {"schema_version", kSchemaVersion},
         {"method", a.method},
         {"config", config},
         {"concepts", rows}};
  if (a.evaluate) {
    const std::uint64_t eval_seed = seed ? *seed : resolve_seed(a.seed, "uncertainty --evaluate");
    seed = eval_seed;
    const UncertaintyEvaluation ev = evaluate_uncertainty(eps, b, eval_seed);
    json err = json::array();
    for (Eigen::Index k = 0; k < ev.error_rate.size(); ++k) {
      err.push_back(ev.included[static_cast<std::size_t>(k)] ? json(ev.error_rate(k)) : json(nullptr));
    }
    json jac = json::object();
    for (const auto& [k, v] : ev.jaccard) jac[std::to_string(k)] = v;
    j["evaluation"] = {{"cos_sim", ev.cos_sim}, {"jaccard", jac}, {"error_rate", err}};
  }
  j["seed"] = seed ? json(*seed) : json(nullptr);
  emit(j.dump(2) + "\n", a.out, out);
}

// ---- compare ----------------------------------------------------------------

// Score rows keyed by label, read from an explanation report or an
// uncertainty table (single row named "epsilon").
struct ScoreTable {
  std::vector<std::string> names;
  std::vector<std::string> labels;
  MatrixXd scores;  // L x K
};

ScoreTable load_table(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingFileError("cannot open: " + path);
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": not valid JSON: " + e.what());
  }
  const std::string format = j.value("format", "");
  ScoreTable t;
  if (format == "uace-report") {
    const ExplanationReport r = report_from_json(text);
    t.names = r.concept_names;
    t.labels = r.label_names;
    t.scores = r.score;
    return t;
  }
  if (format == "uace-uncertainty") {
    try {
      const auto& rows = j.at("concepts");
      t.scores.resize(1, static_cast<Eigen::Index>(rows.size()));
      Eigen::Index k = 0;
      for (const auto& row : rows) {
        t.names.push_back(row.at("concept").get<std::string>());
        t.scores(0, k++) = row.at("epsilon").get<double>();
      }
    } catch (const json::exception& e) {
      throw ValidationError(path + ": malformed uncertainty table: " + e.what());
    }
    t.labels = {"epsilon"};
    return t;
  }
  throw ValidationError(path + ": unsupported format '" + format + "'");
}

struct CompareArgs {
  std::string a;
  std::string b;
  std::string metric;
  std::size_t k = 10;
  bool salient = false;
  std::string out;
};

VectorXd aligned(const ScoreTable& to, const ScoreTable& from, std::size_t label_from) {
  std::map<std::string, Eigen::Index> pos;
  for (std::size_t i = 0; i < from.names.size(); ++i) pos[from.names[i]] = static_cast<Eigen::Index>(i);
  if (pos.size() != to.names.size()) throw ValidationError("compare: concept sets differ");
  VectorXd v(static_cast<Eigen::Index>(to.names.size()));
  for (std::size_t i = 0; i < to.names.size(); ++i) {
    const auto it = pos.find(to.names[i]);
    if (it == pos.end()) throw ValidationError("compare: concept sets differ at '" + to.names[i] + "'");
    v(static_cast<Eigen::Index>(i)) = from.scores(static_cast<Eigen::Index>(label_from), it->second);
  }
  return v;
}

void cmd_compare(const CompareArgs& c, std::ostream& out) {
  const ScoreTable ta = load_table(c.a);
  const ScoreTable tb = load_table(c.b);
  const std::size_t k = std::min(c.k, ta.names.size());
  json results = json::array();
  for (std::size_t la = 0; la < ta.labels.size(); ++la) {
    const auto it = std::find(tb.labels.begin(), tb.labels.end(), ta.labels[la]);
    if (it == tb.labels.end()) {
      throw ValidationError("compare: label '" + ta.labels[la] + "' missing from " + c.b);
    }
    const auto lb = static_cast<std::size_t>(it - tb.labels.begin());
    const VectorXd va = ta.scores.row(static_cast<Eigen::Index>(la)).transpose();
    const VectorXd vb = tb.scores.row(static_cast<Eigen::Index>(lb)).transpose();
    const RankedExplanation ra = to_ranked(ta.names, va);
    const RankedExplanation rb = to_ranked(tb.names, vb);
    double value = 0;
    if (c.metric == "topkdiff") {
      value = topk_abs_diff(ra, rb, k);
    } else if (c.metric == "kendall") {
      std::optional<std::set<std::string>> restrict_to;
      if (c.salient) {
        restrict_to = nonzero_concepts(ra);
        restrict_to->merge(nonzero_concepts(rb));
      }
      value = kendall_tau_distance(ra, rb, restrict_to);
    } else if (c.metric == "jaccard") {
      value = jaccard_topk(va, aligned(ta, tb, lb), k);
    } else if (c.metric == "drift") {
      value = drift(ra, rb);
    } else {
      throw UsageError("unknown metric: " + c.metric);
    }
    results.push_back(json{{"label", ta.labels[la]}, {"value", value}});
  }
  json j{{"format", "uace-compare"},
         {"schema_version", kSchemaVersion},
         {"metric", c.metric},
         {"results", results}};
  if (c.metric == "topkdiff" || c.metric == "jaccard") j["k"] = k;
  if (c.metric == "kendall") j["salient"] = c.salient;
  emit(j.dump(2) + "\n", c.out, out);
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string scenario;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string bundle_out;
  // Overcomplete: "corollary" puts w on concept 0 with sigma_0 = 0.
  std::string layout = "corollary";
  std::optional<int> dim;
  std::optional<int> n;
  int k = 20;
  double ratio = 2.5;
  double max_sigma = 0.00625;
  double b1 = 0.05;
  double b2 = 0.03;
  double beta_sigma = 0.1;
  std::vector<double> populations{0.25, 0.25, 0.25, 0.25};
  std::string concepts = "colors";
  double tag_prob = 0.5;
  int nuisance = 0;
  std::vector<std::string> methods{"uace", "ols"};
  TrialSuiteConfig suite;
};

SyntheticScenario build_scenario(const SynthArgs& a, std::uint64_t seed) {
  const ScenarioKind kind = scenario_from_string(a.scenario);
  switch (kind) {
    case ScenarioKind::overcomplete:
      if (a.layout == "corollary") {
        return corollary_scenario(a.k, a.dim.value_or(128), a.n.value_or(400), a.ratio, seed);
      }
      if (a.layout == "general") {
        return overcomplete_scenario(a.dim.value_or(512), a.n.value_or(2000), a.k, a.max_sigma, seed);
      }
      throw UsageError("unknown layout: " + a.layout);
    case ScenarioKind::undercomplete:
      return undercomplete_scenario(a.b1, a.b2, a.beta_sigma, a.dim.value_or(16), a.n.value_or(2000),
                                    seed);
    case ScenarioKind::four_color:
      return four_color_scenario(a.populations, color_concepts_from_string(a.concepts),
                                 a.n.value_or(400), seed);
    case ScenarioKind::spurious_tag:
      return spurious_tag_scenario(a.tag_prob, a.nuisance, a.n.value_or(400), seed);
  }
  throw UsageError("unknown scenario: " + a.scenario);
}

void cmd_synth(SynthArgs a, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(a.seed, "synth");
  const SyntheticScenario scenario = build_scenario(a, seed);
  if (!a.bundle_out.empty()) write_bundle(generate(scenario).to_bundle(), a.bundle_out);
  if (!a.bundle_out.empty() && !a.trials) {
    json j{{"format", "uace-synth-bundle"},
           {"schema_version", kSchemaVersion},
           {"scenario", to_string(scenario.kind)},
           {"seed", seed},
           {"bundle", a.bundle_out}};
    emit(j.dump(2) + "\n", a.out, out);
    return;
  }
  a.suite.n_trials = a.trials.value_or(100);
  a.suite.seed = seed;
  a.suite.bayes.seed = seed;
  a.suite.tcav.seed = seed;
  a.suite.methods.clear();
  for (const auto& m : a.methods) a.suite.methods.push_back(method_from_string(m));
  emit(to_json(run_trial_suite(scenario, a.suite)), a.out, out);
}

int fail(std::ostream& err, int code, const std::string& kind, const std::string& what) {
  err << "uace: " << kind << ": " << what << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Uncertainty-aware concept explanations", "uace"};
  app.set_version_flag("--version", "0.1.0");
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values; nested objects set subcommand options");
  app.allow_config_extras(CLI::config_extras_mode::error);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads, 0 = all cores")->capture_default_str();

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Check a bundle directory");
  validate->add_option("bundle", va.bundle)->required();

  StatsArgs sa;
  auto* stats = app.add_subcommand("stats", "Concept activation statistics");
  stats->add_option("bundle", sa.bundle)->required();
  stats->add_option("--out", sa.out_dir, "Write the statistics as a matrix directory");

  ExplainArgs ea;
  auto* expl = app.add_subcommand("explain", "Concept importance for every label");
  expl->add_option("bundle", ea.bundle)->required();
  expl->add_option("--method", ea.method)
      ->check(CLI::IsMember({"uace", "ols", "oracle", "ycbm", "ocbm", "tcav"}))
      ->capture_default_str();
  expl->add_option("--lambda", ea.bayes.lambda, "Prior scale")->capture_default_str();
  expl->add_option("--beta", ea.bayes.beta, "Observation precision")->capture_default_str();
  expl->add_flag("--tune", ea.bayes.tune, "Fit lambda and beta by marginal likelihood");
  expl->add_option("--tune-steps", ea.bayes.tune_steps)->capture_default_str();
  expl->add_option("--tune-lr", ea.bayes.tune_lr)->capture_default_str();
  expl->add_option("--tune-samples", ea.bayes.tune_noise_samples)->capture_default_str();
  expl->add_option("--kappa", ea.sparsify.kappa, "Tolerated agreement drop when sparsifying")
      ->capture_default_str();
  expl->add_option("--l1", ea.l1, "Lasso strength (oracle, ycbm)")->capture_default_str();
  expl->add_option("--l2", ea.l2, "Ridge strength (ocbm)")->capture_default_str();
  expl->add_option("--repeats", ea.tcav.repeats, "TCAV repeats")->capture_default_str();
  expl->add_option("--fraction", ea.tcav.subsample_fraction, "TCAV subsample fraction")
      ->capture_default_str();
  expl->add_option("--tcav-l2", ea.tcav.l2)->capture_default_str();
  expl->add_option("--seed", ea.seed);
  expl->add_option("--out", ea.out, "Report path (default: standard output)");

  UncertaintyArgs ua;
  auto* unc = app.add_subcommand("uncertainty", "Per-concept uncertainty estimates");
  unc->add_option("bundle", ua.bundle)->required();
  unc->add_option("--method", ua.method)->check(CLI::IsMember({"prop1", "mc", "df"}))->capture_default_str();
  unc->add_option("--samples", ua.variant.n_samples)->capture_default_str();
  unc->add_option("--fraction", ua.variant.subsample_fraction)->capture_default_str();
  unc->add_option("--df-steps", ua.variant.df_steps)->capture_default_str();
  unc->add_option("--df-lr", ua.variant.df_lr)->capture_default_str();
  unc->add_option("--df-beta", ua.variant.df_beta)->capture_default_str();
  unc->add_flag("--evaluate", ua.evaluate, "Score against held-out probe error (needs annotations)");
  unc->add_option("--seed", ua.seed);
  unc->add_option("--out", ua.out);

  CompareArgs ca;
  auto* cmp = app.add_subcommand("compare", "Compare two reports or uncertainty tables");
  cmp->add_option("a", ca.a)->required();
  cmp->add_option("b", ca.b)->required();
  cmp->add_option("--metric", ca.metric)
      ->required()
      ->check(CLI::IsMember({"topkdiff", "kendall", "jaccard", "drift"}));
  cmp->add_option("--k", ca.k)->capture_default_str();
  cmp->add_flag("--salient", ca.salient, "Kendall over concepts nonzero in either input");
  cmp->add_option("--out", ca.out);

  SynthArgs ya;
  auto* syn = app.add_subcommand("synth", "Synthetic scenarios and trial suites");
  syn->add_option("scenario", ya.scenario)
      ->required()
      ->check(CLI::IsMember({"overcomplete", "undercomplete", "four_color", "spurious_tag"}));
  syn->add_option("--trials", ya.trials);
  syn->add_option("--seed", ya.seed);
  syn->add_option("--out", ya.out, "Trial report path");
  syn->add_option("--bundle-out", ya.bundle_out, "Write one generated bundle here");
  syn->add_option("--layout", ya.layout)->check(CLI::IsMember({"corollary", "general"}))->capture_default_str();
  syn->add_option("--dim", ya.dim);
  syn->add_option("--n", ya.n);
  syn->add_option("--k", ya.k)->capture_default_str();
  syn->add_option("--ratio", ya.ratio)->capture_default_str();
  syn->add_option("--max-sigma", ya.max_sigma)->capture_default_str();
  syn->add_option("--b1", ya.b1)->capture_default_str();
  syn->add_option("--b2", ya.b2)->capture_default_str();
  syn->add_option("--beta-sigma", ya.beta_sigma)->capture_default_str();
  syn->add_option("--populations", ya.populations)->expected(4)->delimiter(',');
  syn->add_option("--concepts", ya.concepts)
      ->check(CLI::IsMember({"colors", "colors_and_compounds", "compounds"}))
      ->capture_default_str();
  syn->add_option("--tag-prob", ya.tag_prob)->capture_default_str();
  syn->add_option("--nuisance", ya.nuisance)->capture_default_str();
  syn->add_option("--methods", ya.methods)->delimiter(',');
  syn->add_option("--lambda", ya.suite.bayes.lambda)->capture_default_str();
  syn->add_option("--beta", ya.suite.bayes.beta)->capture_default_str();
  syn->add_flag("--tune", ya.suite.bayes.tune);
  syn->add_option("--kappa", ya.suite.sparsify.kappa)->capture_default_str();
  syn->add_option("--label", ya.suite.label)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage_error;
  } catch (const Error& e) {
    return fail(err, usage_error, "usage error", e.what());
  }

  try {
    set_thread_count(threads);
    if (*validate) cmd_validate(va, out);
    else if (*stats) cmd_stats(sa, out);
    else if (*expl) cmd_explain(ea, out);
    else if (*unc) cmd_uncertainty(ua, out);
    else if (*cmp) cmd_compare(ca, out);
    else if (*syn) cmd_synth(ya, out);
  } catch (const UsageError& e) {
    return fail(err, usage_error, "usage error", e.what());
  } catch (const ValidationError& e) {
    return fail(err, validation_error, "validation error", e.what());
  } catch (const IoError& e) {
    return fail(err, validation_error, "i/o error", e.what());
  } catch (const NumericalError& e) {
    return fail(err, numerical_error, "numerical error", e.what());
  } catch (const std::exception& e) {
    return fail(err, numerical_error, "error", e.what());
  }
  return ok;
}

}  // namespace uace::cli
