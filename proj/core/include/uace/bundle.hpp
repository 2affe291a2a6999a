#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uace {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixU8 = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Everything needed to explain one classifier on one probe set.
//
// Matrices are stored at 32-bit precision, the precision of the on-disk
// format, so that write/read round trips are bit exact. Numerical code
// promotes to double on use.
struct ProbeBundle {
  MatrixF repr;          // N x d_f, task-model last-layer representations
  MatrixF logits;        // N x L
  MatrixF mm_image;      // N x d_g, multimodal image embeddings
  MatrixF concept_text;  // K x d_g, multimodal text embeddings
  std::vector<std::string> concept_names;  // K, unique, non-empty
  std::vector<std::string> label_names;    // L
  std::optional<MatrixU8> annotations;     // N x K, 0/1

  [[nodiscard]] Eigen::Index n_examples() const { return repr.rows(); }
  [[nodiscard]] Eigen::Index n_labels() const { return logits.cols(); }
  [[nodiscard]] Eigen::Index n_concepts() const { return concept_text.rows(); }

  friend bool operator==(const ProbeBundle& a, const ProbeBundle& b);
};

// Throws ValidationError (naming the field and row) on the first violation.
void validate(const ProbeBundle& bundle);

// Writes manifest.json plus one little-endian row-major file per matrix.
// Output is byte-identical for identical bundles.
void write_bundle(const ProbeBundle& bundle, const std::filesystem::path& dir);

// Reads and validates. Missing files, dimension mismatches and checksum
// mismatches raise MissingFileError, DimensionError and ChecksumError.
ProbeBundle read_bundle(const std::filesystem::path& dir);

// FNV-1a, 64 bit. Stable across platforms; used for per-file checksums.
std::uint64_t fnv1a64(const void* data, std::size_t size);

// Writes a named set of double matrices using the same conventions
// (manifest + f32 files). Used for dumping ActivationStats and similar.
struct NamedMatrix {
  std::string name;
  Eigen::MatrixXd values;
};
void write_matrix_dir(const std::filesystem::path& dir, const std::string& kind,
                      const std::vector<NamedMatrix>& matrices,
                      const std::vector<std::string>& concept_names);

}  // namespace uace
