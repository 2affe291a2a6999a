#pragma once

#include "uace/bundle.hpp"
#include "uace/linalg.hpp"
#include "uace/random.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace uace::test {

inline MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline std::vector<std::string> names(const std::string& prefix, int count) {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Dense random bundle; annotations are Bernoulli(1/2).
inline ProbeBundle random_bundle(int n, int k, int l, int d_f, int d_g, std::uint64_t seed,
                                 bool annotations = true) {
  Rng rng(seed);
  ProbeBundle b;
  b.repr = gaussian(n, d_f, rng).cast<float>();
  b.logits = gaussian(n, l, rng).cast<float>();
  b.mm_image = gaussian(n, d_g, rng).cast<float>();
  b.concept_text = gaussian(k, d_g, rng).cast<float>();
  b.concept_names = names("concept_", k);
  b.label_names = names("label_", l);
  if (annotations) {
    MatrixU8 a(n, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) a(i, j) = rng.uniform() < 0.5 ? 1 : 0;
    b.annotations = a;
  }
  return b;
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "uace_test_XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << bytes;
}

}  // namespace uace::test
