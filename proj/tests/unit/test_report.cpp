#include "helpers.hpp"

#include "uace/error.hpp"
#include "uace/report.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace uace;

namespace {

void check_same(const ExplanationReport& a, const ExplanationReport& b) {
  CHECK(a.method == b.method);
  CHECK(a.config == b.config);
  CHECK(a.seed == b.seed);
  CHECK(a.concept_names == b.concept_names);
  CHECK(a.label_names == b.label_names);
  CHECK(a.score == b.score);
  CHECK(a.scored == b.scored);
  CHECK(a.mu.has_value() == b.mu.has_value());
  if (a.mu && b.mu) {
    CHECK(*a.mu == *b.mu);
    CHECK(*a.sigma == *b.sigma);
    CHECK(*a.importance == *b.importance);
    CHECK(*a.sparse == *b.sparse);
  }
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("U-ACE report round-trips exactly") {
  const ProbeBundle b = test::random_bundle(40, 6, 3, 5, 7, 1, false);
  BayesConfig bc;
  bc.lambda = 0.3;
  const PosteriorExplanation e = explain(b, bc, SparsifyConfig{});
  const ExplanationReport r = make_report(e, b, bc, SparsifyConfig{});
  CHECK(r.method == "uace");
  CHECK(r.score == ranking_scores(e));
  CHECK((r.sigma->array().square().matrix() - e.sigma_diag).cwiseAbs().maxCoeff() <= 1e-12 * e.sigma_diag.maxCoeff());
  const std::string text = to_json(r);
  const ExplanationReport back = report_from_json(text);
  check_same(r, back);
  CHECK(to_json(back) == text);
}

TEST_CASE("baseline reports round-trip, including unscored concepts and seeds") {
  ProbeBundle b = test::random_bundle(40, 5, 2, 5, 7, 2);
  (*b.annotations).col(1).setZero();
  TcavOptions opt;
  opt.seed = 77;
  const ExplanationReport r = make_report(tcav_explain(b, opt), b);
  CHECK(r.seed == std::optional<std::uint64_t>(77));
  CHECK_FALSE(r.scored[1]);
  const ExplanationReport back = report_from_json(to_json(r));
  check_same(r, back);
  CHECK_FALSE(back.mu.has_value());
}

TEST_CASE("serialization is byte-deterministic and file IO matches") {
  const ProbeBundle b = test::random_bundle(30, 4, 2, 5, 7, 3);
  const ExplanationReport r = make_report(oracle_explain(b), b);
  CHECK(to_json(r) == to_json(make_report(oracle_explain(b), b)));
  test::TempDir t;
  write_report(r, t / "r.json");
  CHECK(test::slurp(t / "r.json") == to_json(r));
  check_same(read_report(t / "r.json"), r);
  const auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["format"] == "uace-report");
  CHECK(j["schema_version"] == 1);
}

TEST_CASE("ranked view and label lookup") {
  const ProbeBundle b = test::random_bundle(30, 4, 2, 5, 7, 4, false);
  const BaselineReport ols = ols_explain(compute_stats(b), to_double(b.logits));
  const ExplanationReport r = make_report(ols, b);
  CHECK(r.label_index(b.label_names[1]) == 1);
  CHECK_THROWS_AS((void)r.label_index("nope"), ValidationError);
  const RankedExplanation rk = r.ranked(1);
  CHECK(rk.rank_scores == to_ranked(b.concept_names, ols.scores.row(1).transpose()).rank_scores);
}

TEST_CASE("malformed reports are validation errors") {
  const ProbeBundle b = test::random_bundle(30, 4, 2, 5, 7, 5, false);
  const std::string good = to_json(make_report(ols_explain(compute_stats(b), to_double(b.logits)), b));
  CHECK_THROWS_AS(report_from_json("{"), ValidationError);
  auto j = nlohmann::json::parse(good);
  j["format"] = "other";
  CHECK_THROWS_AS(report_from_json(j.dump()), ValidationError);
  j = nlohmann::json::parse(good);
  j["schema_version"] = 2;
  CHECK_THROWS_AS(report_from_json(j.dump()), ValidationError);
  j = nlohmann::json::parse(good);
  j["labels"][0]["concepts"].erase(0);
  CHECK_THROWS_AS(report_from_json(j.dump()), DimensionError);
  test::TempDir t;
  CHECK_THROWS_AS(read_report(t / "missing.json"), MissingFileError);
}

}  // TEST_SUITE
