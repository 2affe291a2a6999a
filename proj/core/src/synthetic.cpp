#include "uace/synthetic.hpp"

#include "uace/activation.hpp"
#include "uace/error.hpp"
#include "uace/metrics.hpp"
#include "uace/parallel.hpp"
#include "uace/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace uace {

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::overcomplete: return "overcomplete";
    case ScenarioKind::undercomplete: return "undercomplete";
    case ScenarioKind::four_color: return "four_color";
    case ScenarioKind::spurious_tag: return "spurious_tag";
  }
  return "unknown";
}

ScenarioKind scenario_from_string(const std::string& s) {
  for (ScenarioKind k : {ScenarioKind::overcomplete, ScenarioKind::undercomplete,
                         ScenarioKind::four_color, ScenarioKind::spurious_tag}) {
    if (to_string(k) == s) return k;
  }
  throw UsageError("unknown scenario '" + s + "'");
}

std::string to_string(ColorConcepts c) {
  switch (c) {
    case ColorConcepts::colors: return "colors";
    case ColorConcepts::colors_and_compounds: return "colors_and_compounds";
    case ColorConcepts::compounds: return "compounds";
  }
  return "unknown";
}

ColorConcepts color_concepts_from_string(const std::string& s) {
  for (ColorConcepts c : {ColorConcepts::colors, ColorConcepts::colors_and_compounds,
                          ColorConcepts::compounds}) {
    if (to_string(c) == s) return c;
  }
  throw UsageError("unknown color concept set '" + s + "'");
}

void SyntheticScenario::validate() const {
  if (dim < 2) throw ValidationError("scenario: dim must be >= 2");
  if (n < 4 || n % 2 != 0) throw ValidationError("scenario: n must be even and >= 4");
  if (kind == ScenarioKind::overcomplete) {
    if (k < 1) throw ValidationError("scenario: k must be >= 1");
    if (k > dim) throw ValidationError("scenario: k exceeds the input dimension");
    if (orthogonal_noise && 2 * k > dim) {
      throw ValidationError("scenario: orthogonal noise needs dim >= 2k");
    }
    if (w.size() != dim) throw DimensionError("scenario: w must have length dim");
    if (u.rows() != k || u.cols() != dim) throw DimensionError("scenario: u must be k x dim");
    if (sigma.size() != k) throw DimensionError("scenario: sigma must have length k");
    if ((sigma.array() < 0).any()) throw ValidationError("scenario: sigma must be >= 0");
  }
  if (!(beta_sigma >= 0)) throw ValidationError("scenario: beta_sigma must be >= 0");
  if (populations.size() != 4) throw ValidationError("scenario: populations needs 4 entries");
  for (double p : populations) {
    if (!(p >= 0 && p <= 1)) throw ValidationError("scenario: populations must be in [0, 1]");
  }
  if (*std::max_element(populations.begin(), populations.end()) <= 0) {
    throw ValidationError("scenario: at least one population must be positive");
  }
  if (!(tag_prob >= 0 && tag_prob <= 1)) throw ValidationError("scenario: tag_prob must be in [0, 1]");
  if (nuisance < 0) throw ValidationError("scenario: nuisance must be >= 0");
}

namespace {

MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

VectorXd unit(const VectorXd& v) { return v / v.norm(); }

// Rows +x and -x for N/2 draws. When N/2 >= D the draws are orthonormalized
// so that X'X = N I exactly.
MatrixXd antithetic_inputs(int n, int d, Rng& rng) {
  const int half = n / 2;
  MatrixXd z = gaussian(half, d, rng);
  if (half >= d) {
    Eigen::HouseholderQR<MatrixXd> qr(z);
    z = qr.householderQ() * MatrixXd::Identity(half, d) * std::sqrt(static_cast<double>(half));
  }
  MatrixXd x(n, d);
  x.topRows(half) = z;
  x.bottomRows(half) = -z;
  return x;
}

// Appends a column that brings every row to the same norm (1.25x the largest).
MatrixXd pad_to_constant_norm(const MatrixXd& m, double* radius = nullptr) {
  const VectorXd sq = m.rowwise().squaredNorm();
  const double r2 = 1.5625 * sq.maxCoeff() + 1e-12;
  MatrixXd out(m.rows(), m.cols() + 1);
  out.leftCols(m.cols()) = m;
  out.col(m.cols()) = (r2 - sq.array()).sqrt().matrix();
  if (radius != nullptr) *radius = std::sqrt(r2);
  return out;
}

// Removes from v its components along the rows of basis (assumed orthonormal).
void orthogonalize(VectorXd& v, const std::vector<VectorXd>& basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& b : basis) v -= b.dot(v) * b;
}

std::vector<std::string> numbered(const std::string& prefix, int count) {
  const int width = count > 1 ? static_cast<int>(std::to_string(count - 1).size()) : 1;
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) {
    std::string idx = std::to_string(i);
    out.push_back(prefix + std::string(static_cast<std::size_t>(width) - idx.size(), '0') + idx);
  }
  return out;
}

}  // namespace

ProbeBundle SyntheticData::to_bundle() const {
  ProbeBundle b;
  b.repr = repr.cast<float>();
  b.logits = logits.cast<float>();
  b.mm_image = mm_image.cast<float>();
  b.concept_text = concept_text.cast<float>();
  b.concept_names = concept_names;
  b.label_names = label_names;
  b.annotations = annotations;
  return b;
}

SyntheticScenario overcomplete_scenario(int dim, int n, int k, double max_sigma,
                                        std::uint64_t seed) {
  SyntheticScenario s;
  s.kind = ScenarioKind::overcomplete;
  s.dim = dim;
  s.n = n;
  s.k = k;
  s.seed = seed;
  s.u = MatrixXd::Identity(k, dim);
  s.sigma.resize(k);
  VectorXd coef(k);
  for (int i = 0; i < k; ++i) {
    coef(i) = (i % 2 == 0 ? 1.0 : -1.0) * (0.5 + 0.25 * (i % 5));
    s.sigma(i) = max_sigma * static_cast<double>(k - i) / static_cast<double>(k);
  }
  s.w = s.u.transpose() * coef;
  return s;
}

SyntheticScenario corollary_scenario(int k, int dim, int n, double ratio, std::uint64_t seed) {
  SyntheticScenario s;
  s.kind = ScenarioKind::overcomplete;
  s.dim = dim;
  s.n = n;
  s.k = k;
  s.seed = seed;
  s.u = MatrixXd::Identity(k, dim);
  s.w = VectorXd::Unit(dim, 0);
  s.sigma = VectorXd::Constant(k, 1.0 / ratio);
  s.sigma(0) = 0.0;
  return s;
}

SyntheticScenario undercomplete_scenario(double b1, double b2, double beta_sigma, int dim, int n,
                                         std::uint64_t seed) {
  SyntheticScenario s;
  s.kind = ScenarioKind::undercomplete;
  s.dim = dim;
  s.n = n;
  s.k = 2;
  s.b1 = b1;
  s.b2 = b2;
  s.beta_sigma = beta_sigma;
  s.seed = seed;
  return s;
}

SyntheticScenario four_color_scenario(std::vector<double> populations, ColorConcepts concepts,
                                      int n, std::uint64_t seed) {
  SyntheticScenario s;
  s.kind = ScenarioKind::four_color;
  s.dim = 64;
  s.n = n;
  s.populations = std::move(populations);
  s.color_concepts = concepts;
  s.k = concepts == ColorConcepts::colors_and_compounds ? 8 : 4;
  s.seed = seed;
  return s;
}

SyntheticScenario spurious_tag_scenario(double tag_prob, int nuisance, int n, std::uint64_t seed) {
  SyntheticScenario s;
  s.kind = ScenarioKind::spurious_tag;
  s.dim = 128;
  s.n = n;
  s.tag_prob = tag_prob;
  s.nuisance = nuisance;
  s.k = 11 + nuisance;
  s.seed = seed;
  return s;
}

SyntheticScenario default_scenario(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::overcomplete: return overcomplete_scenario(512, 2000, 20, 0.00625, 0);
    case ScenarioKind::undercomplete: return undercomplete_scenario(0.05, 0.03, 0.1, 16, 2000, 0);
    case ScenarioKind::four_color: return four_color_scenario({0.25, 0.25, 0.25, 0.25}, ColorConcepts::colors, 400, 0);
    case ScenarioKind::spurious_tag: return spurious_tag_scenario(0.5, 0, 400, 0);
  }
  throw UsageError("unknown scenario");
}

SyntheticData gen_overcomplete(const SyntheticScenario& sc) {
  sc.validate();
  Rng rng(sc.seed);
  const MatrixXd x = antithetic_inputs(sc.n, sc.dim, rng);
  MatrixXd xi = gaussian(sc.k, sc.dim, rng);
  if (sc.orthogonal_noise) {
    std::vector<VectorXd> basis;
    for (int i = 0; i < sc.k; ++i) {
      VectorXd ui = sc.u.row(i).transpose();
      orthogonalize(ui, basis);
      if (ui.norm() > 1e-12) basis.push_back(unit(ui));
    }
    for (int i = 0; i < sc.k; ++i) {
      VectorXd v = xi.row(i).transpose();
      orthogonalize(v, basis);
      v = unit(v);
      basis.push_back(v);
      xi.row(i) = v.transpose() * std::sqrt(static_cast<double>(sc.dim));
    }
  }
  const MatrixXd w_k = sc.u + sc.sigma.asDiagonal() * xi;  // K x D

  SyntheticData out;
  double radius = 0;
  out.mm_image = pad_to_constant_norm(x, &radius);
  out.concept_text = MatrixXd::Zero(sc.k, sc.dim + 1);
  out.concept_text.leftCols(sc.dim) = w_k;
  out.repr = pad_to_constant_norm(x * sc.u.transpose());
  const VectorXd y = x * sc.w;
  out.logits.resize(sc.n, 2);
  out.logits << y, -y;
  out.concept_names = numbered("c", sc.k);
  out.label_names = {"y", "neg_y"};
  out.activations = x * w_k.transpose();
  // cos_alpha is the norm of w_k's projection onto the row space of u over |w_k|.
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(sc.u.transpose());
  const MatrixXd q = MatrixXd(qr.householderQ()).leftCols(qr.rank());
  out.activation_scale.resize(sc.k);
  for (int i = 0; i < sc.k; ++i) {
    const double wn = w_k.row(i).norm();
    out.activation_scale(i) = (q.transpose() * w_k.row(i).transpose()).norm() / (radius * wn * wn);
  }
  return out;
}

SyntheticData gen_undercomplete(const SyntheticScenario& sc) {
  sc.validate();
  Rng rng(sc.seed);
  const MatrixXd x = antithetic_inputs(sc.n, sc.dim, rng);
  const VectorXd u = VectorXd::Unit(sc.dim, 0);
  const VectorXd v = VectorXd::Unit(sc.dim, 1);
  VectorXd beta(2);
  beta << sc.b1, sc.b2;
  if (sc.beta_sigma > 0) {
    for (int i = 0; i < 2; ++i) beta(i) += sc.beta_sigma * rng.normal();
  }
  MatrixXd w_k(2, sc.dim);
  for (int i = 0; i < 2; ++i) w_k.row(i) = (beta(i) * u + (1.0 - beta(i)) * v).transpose();

  SyntheticData out;
  double radius = 0;
  out.mm_image = pad_to_constant_norm(x, &radius);
  out.concept_text = MatrixXd::Zero(2, sc.dim + 1);
  out.concept_text.leftCols(sc.dim) = w_k;
  out.repr = pad_to_constant_norm(x * u);
  const VectorXd y = x * u;
  out.logits.resize(sc.n, 2);
  out.logits << y, -y;
  out.concept_names = {"concept_1", "concept_2"};
  out.label_names = {"y", "neg_y"};
  out.activations = x * w_k.transpose();
  out.activation_scale.resize(2);
  for (int i = 0; i < 2; ++i) {
    const double wn = w_k.row(i).norm();
    out.activation_scale(i) = std::abs(beta(i)) / (radius * wn * wn);
  }
  out.concept_weights = beta;
  return out;
}

UndercompleteSurrogate undercomplete_surrogate(const SyntheticScenario& sc) {
  sc.validate();
  Rng rng(sc.seed);
  const MatrixXd x = antithetic_inputs(sc.n, sc.dim, rng);
  const VectorXd u = VectorXd::Unit(sc.dim, 0);
  const VectorXd v = VectorXd::Unit(sc.dim, 1);
  UndercompleteSurrogate out;
  out.activations.resize(sc.n, 2);
  out.activations.col(0) = x * (sc.b1 * u + (1.0 - sc.b1) * v);
  out.activations.col(1) = x * (sc.b2 * u + (1.0 - sc.b2) * v);
  out.epsilon = VectorXd::Constant(2, std::sqrt(2.0) * sc.beta_sigma);
  out.targets = x * u;
  return out;
}

namespace {

// Four-color constants. The multimodal image embedding also carries
// per-image context the classifier never sees; text embeddings load on it
// through a random direction, color words weakly and compound phrases
// strongly. The red word leans toward green.
constexpr double kPixelNoise = 0.05;
constexpr double kRedTowardGreen = 0.4;
constexpr double kDetectorThreshold = 0.5;
constexpr int kMixtureUnits = 8;
constexpr int kContextDims = 16;
constexpr double kColorWordContext = 0.1;
constexpr double kCompoundContext = 0.6;
constexpr double kWordOrderJitter = 0.05;

}  // namespace

SyntheticData gen_four_color(const SyntheticScenario& sc) {
  sc.validate();
  Rng rng(sc.seed);
  const int d = sc.dim;
  std::array<VectorXd, 4> color;
  for (auto& c : color) c = unit(gaussian(d, 1, rng).col(0));

  // Probe counts by largest remainder so they sum to n exactly.
  const double total = std::accumulate(sc.populations.begin(), sc.populations.end(), 0.0);
  std::array<int, 4> count{};
  std::array<double, 4> remainder{};
  int assigned = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    const double exact = sc.n * sc.populations[c] / total;
    count[c] = static_cast<int>(std::floor(exact));
    remainder[c] = exact - count[c];
    assigned += count[c];
  }
  while (assigned < sc.n) {
    const auto c = static_cast<std::size_t>(
        std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
    ++count[c];
    remainder[c] = -1.0;
    ++assigned;
  }
  std::vector<int> color_of;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < count[static_cast<std::size_t>(c)]; ++i) color_of.push_back(c);
  MatrixXd x(sc.n, d);
  for (int i = 0; i < sc.n; ++i) {
    const auto c = static_cast<std::size_t>(color_of[static_cast<std::size_t>(i)]);
    x.row(i) = (color[c] + kPixelNoise * gaussian(d, 1, rng).col(0)).transpose();
  }
  const MatrixXd context = gaussian(sc.n, kContextDims, rng) / std::sqrt(static_cast<double>(kContextDims));
  auto text_embedding = [&](const VectorXd& color_part, double context_weight) {
    VectorXd t(d + kContextDims);
    t << unit(color_part), context_weight * unit(gaussian(kContextDims, 1, rng).col(0));
    return unit(t);
  };

  const std::array<const char*, 4> names{"red", "green", "blue", "white"};
  std::vector<VectorXd> texts;
  std::vector<std::array<bool, 4>> active;  // colors each concept describes
  SyntheticData out;
  if (sc.color_concepts != ColorConcepts::compounds) {
    for (std::size_t c = 0; c < 4; ++c) {
      VectorXd t = color[c];
      if (c == 0) t += kRedTowardGreen * color[1];
      texts.push_back(text_embedding(t, kColorWordContext));
      std::array<bool, 4> on{};
      on[c] = true;
      active.push_back(on);
      out.concept_names.emplace_back(names[c]);
    }
  }
  if (sc.color_concepts != ColorConcepts::colors) {
    // Each compound names one color of each label.
    // The two word orders of a phrase share a context direction up to a
    // small jitter, so they are near duplicates.
    const std::array<std::pair<std::size_t, std::size_t>, 4> pairs{{{0, 2}, {2, 0}, {1, 2}, {2, 1}}};
    std::array<VectorXd, 2> phrase_context{unit(gaussian(kContextDims, 1, rng).col(0)),
                                           unit(gaussian(kContextDims, 1, rng).col(0))};
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [a, b] = pairs[p];
      const VectorXd ctx =
          unit(phrase_context[p / 2] + kWordOrderJitter * unit(gaussian(kContextDims, 1, rng).col(0)));
      VectorXd t(d + kContextDims);
      t << unit(color[a] + color[b]), kCompoundContext * ctx;
      texts.push_back(unit(t));
      std::array<bool, 4> on{};
      on[a] = on[b] = true;
      active.push_back(on);
      out.concept_names.push_back(std::string(names[a]) + " or " + names[b]);
    }
  }
  const auto k = static_cast<Eigen::Index>(texts.size());
  out.mm_image.resize(sc.n, d + kContextDims);
  out.mm_image << x, context;
  out.concept_text.resize(k, d + kContextDims);
  for (Eigen::Index j = 0; j < k; ++j) out.concept_text.row(j) = texts[static_cast<std::size_t>(j)].transpose();

  // Classifier stand-in trained on all four colors: one ReLU detector per
  // color feeding the label head, plus ReLU units on random color mixtures
  // that the head ignores.
  std::vector<VectorXd> units;
  std::vector<double> head;
  for (std::size_t c = 0; c < 4; ++c) {
    units.push_back(color[c]);
    head.push_back(c < 2 ? 1.0 : -1.0);
  }
  for (int r = 0; r < kMixtureUnits; ++r) {
    VectorXd mix = VectorXd::Zero(d);
    for (const auto& c : color) mix += rng.normal() * c;
    units.push_back(unit(mix));
    head.push_back(0.0);
  }
  const auto h = static_cast<Eigen::Index>(units.size());
  out.repr.resize(sc.n, h);
  VectorXd logit0 = VectorXd::Zero(sc.n);
  for (Eigen::Index j = 0; j < h; ++j) {
    const auto js = static_cast<std::size_t>(j);
    out.repr.col(j) = ((x * units[js]).array() - kDetectorThreshold).max(0.0).matrix();
    logit0 += head[js] * out.repr.col(j);
  }
  out.logits.resize(sc.n, 2);
  out.logits << logit0, -logit0;
  out.label_names = {"red_or_green", "blue_or_white"};

  MatrixU8 ann = MatrixU8::Zero(sc.n, k);
  for (int i = 0; i < sc.n; ++i) {
    const auto c = static_cast<std::size_t>(color_of[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < k; ++j) ann(i, j) = active[static_cast<std::size_t>(j)][c] ? 1 : 0;
  }
  out.annotations = std::move(ann);
  return out;
}

namespace {

// Spurious-tag constants. Images are a class direction plus visible parts
// (each present with probability 1/2), an optional tag and texture the
// classifier uses but no concept describes.
constexpr int kCarConcepts = 7;
constexpr int kPlaneConcepts = 3;
constexpr double kPartScale = 0.5;
constexpr double kPartPresence = 0.5;
constexpr double kTagPixelNoise = 0.05;
constexpr int kTextureDims = 5;
constexpr double kTextureScale = 1.0;
constexpr double kTextureHead = 1.0;
constexpr double kNuisanceAnnotationRate = 0.2;

}  // namespace

SyntheticData gen_spurious_tag(const SyntheticScenario& sc) {
  sc.validate();
  const int d = sc.dim;
  const int parts = kCarConcepts + kPlaneConcepts;
  const int needed = 3 + parts + kTextureDims + sc.nuisance;
  if (needed > d) throw ValidationError("spurious_tag: too many nuisance concepts for dim");
  Rng rng(sc.seed);

  std::vector<VectorXd> basis;
  auto fresh = [&]() {
    VectorXd v = gaussian(d, 1, rng).col(0);
    orthogonalize(v, basis);
    v = unit(v);
    basis.push_back(v);
    return v;
  };
  const VectorXd a = fresh();
  const VectorXd b = fresh();
  const VectorXd t = fresh();
  std::vector<VectorXd> part(static_cast<std::size_t>(parts));
  for (auto& p : part) p = fresh();
  std::vector<VectorXd> texture(kTextureDims);
  for (auto& v : texture) v = fresh();
  std::vector<VectorXd> nuisance(static_cast<std::size_t>(sc.nuisance));
  for (auto& v : nuisance) v = fresh();

  SyntheticData out;
  std::vector<VectorXd> texts = part;
  for (const auto& name : numbered("car_", kCarConcepts)) out.concept_names.push_back(name);
  for (const auto& name : numbered("plane_", kPlaneConcepts)) out.concept_names.push_back(name);
  texts.push_back(t);
  out.concept_names.emplace_back("tag");
  for (const auto& v : nuisance) texts.push_back(v);
  for (const auto& name : numbered("nuisance_", sc.nuisance)) out.concept_names.push_back(name);
  const auto k = static_cast<Eigen::Index>(texts.size());

  // Classifier: linear head on its own features (class, parts, tag, texture).
  std::vector<VectorXd> repr_dirs{a, b, t};
  repr_dirs.insert(repr_dirs.end(), part.begin(), part.end());
  repr_dirs.insert(repr_dirs.end(), texture.begin(), texture.end());
  VectorXd head = a - b + (2.0 * sc.tag_prob - 1.0) * t;
  for (int j = 0; j < parts; ++j) head += (j < kCarConcepts ? 1.0 : -1.0) * part[static_cast<std::size_t>(j)];
  for (const auto& v : texture) head += kTextureHead * rng.normal() * v;

  MatrixXd x(sc.n, d);
  MatrixU8 ann = MatrixU8::Zero(sc.n, k);
  for (int i = 0; i < sc.n; ++i) {
    const bool class_a = i % 2 == 0;
    const bool tagged = rng.uniform() < (class_a ? sc.tag_prob : 1.0 - sc.tag_prob);
    VectorXd xi = (class_a ? a : b) + kTagPixelNoise * gaussian(d, 1, rng).col(0);
    if (tagged) xi += t;
    const int first = class_a ? 0 : kCarConcepts;
    const int last = class_a ? kCarConcepts : parts;
    for (int j = first; j < last; ++j) {
      if (rng.uniform() < kPartPresence) {
        xi += kPartScale * part[static_cast<std::size_t>(j)];
        ann(i, j) = 1;
      }
    }
    for (const auto& v : texture) xi += kTextureScale * rng.normal() * v;
    x.row(i) = xi.transpose();
    ann(i, parts) = tagged ? 1 : 0;
    for (int j = 0; j < sc.nuisance; ++j) {
      ann(i, parts + 1 + j) = rng.uniform() < kNuisanceAnnotationRate ? 1 : 0;
    }
  }
  out.mm_image = x;
  out.concept_text.resize(k, d);
  for (Eigen::Index j = 0; j < k; ++j) out.concept_text.row(j) = texts[static_cast<std::size_t>(j)].transpose();
  MatrixXd proj(d, static_cast<Eigen::Index>(repr_dirs.size()));
  for (std::size_t j = 0; j < repr_dirs.size(); ++j) proj.col(static_cast<Eigen::Index>(j)) = repr_dirs[j];
  out.repr = x * proj;
  const VectorXd logit_a = x * head;
  out.logits.resize(sc.n, 2);
  out.logits << logit_a, -logit_a;
  out.label_names = {"car", "plane"};
  out.annotations = std::move(ann);
  return out;
}

SyntheticData generate(const SyntheticScenario& scenario) {
  switch (scenario.kind) {
    case ScenarioKind::overcomplete: return gen_overcomplete(scenario);
    case ScenarioKind::undercomplete: return gen_undercomplete(scenario);
    case ScenarioKind::four_color: return gen_four_color(scenario);
    case ScenarioKind::spurious_tag: return gen_spurious_tag(scenario);
  }
  throw UsageError("unknown scenario");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> predict_corollary(const SyntheticScenario& sc, const std::vector<int>& k_values) {
  if (sc.u.rows() != sc.sigma.size()) throw DimensionError("predict_corollary: u and sigma disagree");
  const double wn = sc.w.norm();
  std::vector<double> out;
  for (int kv : k_values) {
    if (kv < 1 || kv > sc.u.rows()) throw ValidationError("predict_corollary: K out of range");
    double p = 1.0;
    for (int i = 1; i < kv; ++i) {
      const double s = sc.sigma(i) * wn;
      if (s > 0) p *= normal_cdf(sc.u.row(i).norm() / s);
    }
    out.push_back(p);
  }
  return out;
}

MatrixXd method_scores(Method method, const ProbeBundle& bundle, const TrialSuiteConfig& config,
                       std::uint64_t seed) {
  switch (method) {
    case Method::uace: {
      BayesConfig b = config.bayes;
      b.seed = seed;
      return ranking_scores(explain(bundle, b, config.sparsify));
    }
    case Method::ols: return ols_explain(compute_stats(bundle), to_double(bundle.logits)).scores;
    case Method::oracle: return oracle_explain(bundle, config.l1_strength).scores;
    case Method::ycbm: return ycbm_explain(bundle, config.l1_strength).scores;
    case Method::ocbm: return ocbm_explain(bundle, config.l2_strength).scores;
    case Method::tcav: {
      TcavOptions t = config.tcav;
      t.seed = seed;
      return tcav_explain(bundle, t).scores;
    }
  }
  throw UsageError("unknown method");
}

TrialReport run_trial_suite(const SyntheticScenario& scenario, const TrialSuiteConfig& config) {
  if (config.n_trials < 1) throw ValidationError("trial suite: n_trials must be >= 1");
  if (config.methods.empty()) throw ValidationError("trial suite: no methods");
  scenario.validate();
  const auto trials = static_cast<std::size_t>(config.n_trials);
  const std::size_t m_count = config.methods.size();
  // scores[t][m] is the label row for trial t and method m.
  std::vector<std::vector<VectorXd>> scores(trials, std::vector<VectorXd>(m_count));
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> trial_names(trials);
  parallel_for(trials, [&](std::size_t t) {
    SyntheticScenario sc = scenario;
    sc.seed = derive_seed(config.seed, t);
    const ProbeBundle bundle = generate(sc).to_bundle();
    if (config.label >= static_cast<std::size_t>(bundle.n_labels())) {
      throw ValidationError("trial suite: label index out of range");
    }
    for (std::size_t m = 0; m < m_count; ++m) {
      scores[t][m] = method_scores(config.methods[m], bundle, config, sc.seed)
                         .row(static_cast<Eigen::Index>(config.label))
                         .transpose();
    }
    trial_names[t] = bundle.concept_names;
  });
  names = trial_names.front();

  TrialReport report;
  report.scenario = scenario;
  report.config = config;
  report.concept_names = names;
  if (scenario.kind == ScenarioKind::overcomplete && scenario.sigma(0) == 0.0) {
    const VectorXd u0 = scenario.u.row(0).transpose();
    if (std::abs(u0.dot(scenario.w)) >= (1.0 - 1e-12) * u0.norm() * scenario.w.norm()) {
      report.predicted_top1 = predict_corollary(scenario, {scenario.k}).front();
    }
  }
  const auto k = static_cast<Eigen::Index>(names.size());
  const auto nt = static_cast<double>(trials);
  for (std::size_t m = 0; m < m_count; ++m) {
    MethodSummary s;
    s.method = config.methods[m];
    s.mean_score = VectorXd::Zero(k);
    s.mean_rank = VectorXd::Zero(k);
    s.top1_frequency = VectorXd::Zero(k);
    for (std::size_t t = 0; t < trials; ++t) {
      const VectorXd& sc = scores[t][m];
      s.mean_score += sc;
      const RankedExplanation r = to_ranked(names, sc);
      s.mean_rank += r.rank_scores;
      s.top1_frequency(static_cast<Eigen::Index>(r.order().front())) += 1.0;
    }
    s.mean_score /= nt;
    s.mean_rank /= nt;
    s.top1_frequency /= nt;
    s.se_score = VectorXd::Zero(k);
    if (trials > 1) {
      for (std::size_t t = 0; t < trials; ++t) {
        s.se_score.array() += (scores[t][m] - s.mean_score).array().square();
      }
      s.se_score = (s.se_score / (nt - 1.0) / nt).array().sqrt().matrix();
    }
    report.methods.push_back(std::move(s));
  }
  return report;
}

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string to_json(const TrialReport& r) {
  using nlohmann::json;
  const SyntheticScenario& s = r.scenario;
  json scenario{{"kind", to_string(s.kind)},
                {"dim", s.dim},
                {"n", s.n},
                {"k", s.k},
                {"seed", s.seed}};
  switch (s.kind) {
    case ScenarioKind::overcomplete: {
      scenario["w"] = to_vec(s.w);
      scenario["sigma"] = to_vec(s.sigma);
      json u = json::array();
      for (Eigen::Index i = 0; i < s.u.rows(); ++i) u.push_back(to_vec(s.u.row(i).transpose()));
      scenario["u"] = std::move(u);
      scenario["orthogonal_noise"] = s.orthogonal_noise;
      break;
    }
    case ScenarioKind::undercomplete:
      scenario["b1"] = s.b1;
      scenario["b2"] = s.b2;
      scenario["beta_sigma"] = s.beta_sigma;
      break;
    case ScenarioKind::four_color:
      scenario["populations"] = s.populations;
      scenario["color_concepts"] = to_string(s.color_concepts);
      break;
    case ScenarioKind::spurious_tag:
      scenario["tag_prob"] = s.tag_prob;
      scenario["nuisance"] = s.nuisance;
      break;
  }
  const TrialSuiteConfig& c = r.config;
  json methods_cfg = json::array();
  for (Method m : c.methods) methods_cfg.push_back(to_string(m));
  json config{{"methods", methods_cfg},
              {"n_trials", c.n_trials},
              {"seed", c.seed},
              {"label", c.label},
              {"lambda", c.bayes.lambda},
              {"beta", c.bayes.beta},
              {"tune", c.bayes.tune},
              {"tune_steps", c.bayes.tune_steps},
              {"tune_lr", c.bayes.tune_lr},
              {"tune_noise_samples", c.bayes.tune_noise_samples},
              {"kappa", c.sparsify.kappa},
              {"l1_strength", c.l1_strength},
              {"l2_strength", c.l2_strength},
              {"tcav_repeats", c.tcav.repeats},
              {"tcav_subsample_fraction", c.tcav.subsample_fraction},
              {"tcav_l2", c.tcav.l2}};
  json methods = json::array();
  for (const auto& m : r.methods) {
    json rows = json::array();
    for (std::size_t i = 0; i < r.concept_names.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      rows.push_back(json{{"concept", r.concept_names[i]},
                          {"mean_score", m.mean_score(ii)},
                          {"se_score", m.se_score(ii)},
                          {"mean_rank", m.mean_rank(ii)},
                          {"top1_frequency", m.top1_frequency(ii)}});
    }
    methods.push_back(json{{"method", to_string(m.method)}, {"concepts", std::move(rows)}});
  }
  json j{{"format", "uace-trials"},
         {"schema_version", 1},
         {"scenario", std::move(scenario)},
         {"config", std::move(config)},
         {"methods", std::move(methods)}};
  if (r.predicted_top1) j["predicted_top1"] = *r.predicted_top1;
  return j.dump(2) + "\n";
}

}  // namespace uace
