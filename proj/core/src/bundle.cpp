#include "uace/bundle.hpp"

#include "uace/error.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace uace {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kSchemaVersion = 1;

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

template <typename Mat>
void check_finite(const Mat& m, const char* field) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)))
        throw ValidationError(std::string(field) + "[" + std::to_string(i) +
                              "]: non-finite value in column " + std::to_string(j));
}

void check_nonzero_rows(const MatrixF& m, const char* field) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if ((m.row(i).array() == 0.0f).all())
      throw ValidationError(std::string(field) + "[" + std::to_string(i) +
                            "]: all-zero row (cosine similarity undefined)");
}

void check_rows(Eigen::Index got, Eigen::Index want, const char* field, const char* what) {
  if (got != want)
    throw DimensionError(std::string(field) + ": expected " + std::to_string(want) + " " +
                         what + ", found " + std::to_string(got));
}

void check_names(const std::vector<std::string>& names, const char* field, bool unique) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& n = names[i];
    if (n.empty())
      throw ValidationError(std::string(field) + "[" + std::to_string(i) + "]: empty name");
    if (n.find_first_of("\r\n") != std::string::npos)
      throw ValidationError(std::string(field) + "[" + std::to_string(i) +
                            "]: name contains a line break");
    if (unique && !seen.insert(n).second)
      throw ValidationError(std::string(field) + "[" + std::to_string(i) +
                            "]: duplicate name '" + n + "'");
  }
}

// Little-endian encoding of 32-bit floats, independent of host order.
std::string encode_f32(const float* data, std::size_t count) {
  std::string out(count * 4, '\0');
  for (std::size_t i = 0; i < count; ++i) {
    auto bits = std::bit_cast<std::uint32_t>(data[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  return out;
}

void decode_f32(const std::string& bytes, float* out, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
}

std::string join_lines(const std::vector<std::string>& names) {
  std::string s;
  for (const auto& n : names) {
    s += n;
    s += '\n';
  }
  return s;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::string line;
  std::istringstream is(text);
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + p.string() + "'");
}

std::string read_file(const fs::path& p) {
  if (!fs::exists(p)) throw MissingFileError("missing file '" + p.filename().string() + "'");
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json file_entry(const std::string& file, const std::string& bytes, Eigen::Index rows,
                Eigen::Index cols, const char* dtype) {
  json e;
  e["file"] = file;
  e["rows"] = rows;
  e["cols"] = cols;
  e["dtype"] = dtype;
  e["fnv1a64"] = hex64(fnv1a64(bytes.data(), bytes.size()));
  return e;
}

// Loads one file listed in the manifest, verifying its checksum.
std::string load_checked(const fs::path& dir, const json& entry, const std::string& role) {
  const std::string file = entry.at("file").get<std::string>();
  std::string bytes = read_file(dir / file);
  const std::string want = entry.at("fnv1a64").get<std::string>();
  if (hex64(fnv1a64(bytes.data(), bytes.size())) != want)
    throw ChecksumError(role + ": checksum mismatch in '" + file + "'");
  return bytes;
}

MatrixF load_f32(const fs::path& dir, const json& files, const std::string& role) {
  if (!files.contains(role)) throw MissingFileError("manifest lists no entry for '" + role + "'");
  const json& e = files.at(role);
  std::string bytes = load_checked(dir, e, role);
  const auto rows = e.at("rows").get<Eigen::Index>();
  const auto cols = e.at("cols").get<Eigen::Index>();
  if (rows < 0 || cols < 0 || bytes.size() != static_cast<std::size_t>(rows * cols) * 4)
    throw DimensionError(role + ": file holds " + std::to_string(bytes.size() / 4) +
                         " values, manifest declares " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  MatrixF m(rows, cols);
  decode_f32(bytes, m.data(), static_cast<std::size_t>(m.size()));
  return m;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

bool operator==(const ProbeBundle& a, const ProbeBundle& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           std::memcmp(x.data(), y.data(), sizeof(*x.data()) * x.size()) == 0;
  };
  if (a.annotations.has_value() != b.annotations.has_value()) return false;
  if (a.annotations && !same(*a.annotations, *b.annotations)) return false;
  return same(a.repr, b.repr) && same(a.logits, b.logits) && same(a.mm_image, b.mm_image) &&
         same(a.concept_text, b.concept_text) && a.concept_names == b.concept_names &&
         a.label_names == b.label_names;
}

void validate(const ProbeBundle& b) {
  const auto n = b.repr.rows();
  const auto k = b.concept_text.rows();
  const auto l = b.logits.cols();
  if (n < 1) throw ValidationError("repr: bundle has no examples");
  if (k < 1) throw ValidationError("concept_text: bundle has no concepts");
  if (l < 1) throw ValidationError("logits: bundle has no labels");
  if (b.repr.cols() < 1) throw ValidationError("repr: zero representation dimension");
  if (b.mm_image.cols() < 1) throw ValidationError("mm_image: zero embedding dimension");
  check_rows(b.logits.rows(), n, "logits", "rows");
  check_rows(b.mm_image.rows(), n, "mm_image", "rows");
  check_rows(b.concept_text.cols(), b.mm_image.cols(), "concept_text", "columns");
  check_rows(static_cast<Eigen::Index>(b.concept_names.size()), k, "concept_names", "names");
  check_rows(static_cast<Eigen::Index>(b.label_names.size()), l, "label_names", "names");
  check_finite(b.repr, "repr");
  check_finite(b.logits, "logits");
  check_finite(b.mm_image, "mm_image");
  check_finite(b.concept_text, "concept_text");
  check_nonzero_rows(b.mm_image, "mm_image");
  check_nonzero_rows(b.concept_text, "concept_text");
  check_names(b.concept_names, "concept_names", true);
  check_names(b.label_names, "label_names", false);
  if (b.annotations) {
    const auto& a = *b.annotations;
    check_rows(a.rows(), n, "annotations", "rows");
    check_rows(a.cols(), k, "annotations", "columns");
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        if (a(i, j) > 1)
          throw ValidationError("annotations[" + std::to_string(i) + "]: value " +
                                std::to_string(a(i, j)) + " is not 0/1");
  }
}

void write_bundle(const ProbeBundle& b, const fs::path& dir) {
  validate(b);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  json files;
  auto put = [&](const std::string& role, const MatrixF& m) {
    const std::string name = role + ".f32";
    std::string bytes = encode_f32(m.data(), static_cast<std::size_t>(m.size()));
    write_file(dir / name, bytes);
    files[role] = file_entry(name, bytes, m.rows(), m.cols(), "float32");
  };
  put("repr", b.repr);
  put("logits", b.logits);
  put("mm_image", b.mm_image);
  put("concept_text", b.concept_text);

  const fs::path ann = dir / "annotations.u8";
  if (b.annotations) {
    const auto& a = *b.annotations;
    std::string bytes(reinterpret_cast<const char*>(a.data()), static_cast<std::size_t>(a.size()));
    write_file(ann, bytes);
    files["annotations"] = file_entry("annotations.u8", bytes, a.rows(), a.cols(), "uint8");
  } else if (fs::exists(ann)) {
    fs::remove(ann);
  }

  auto put_names = [&](const std::string& role, const std::vector<std::string>& names) {
    const std::string name = role + ".txt";
    std::string bytes = join_lines(names);
    write_file(dir / name, bytes);
    json e;
    e["file"] = name;
    e["count"] = names.size();
    e["fnv1a64"] = hex64(fnv1a64(bytes.data(), bytes.size()));
    files[role] = e;
  };
  put_names("concept_names", b.concept_names);
  put_names("label_names", b.label_names);

  json m;
  m["format"] = "uace-bundle";
  m["schema_version"] = kSchemaVersion;
  m["dtype"] = "float32";
  m["endianness"] = "little";
  m["layout"] = "row-major";
  m["n_examples"] = b.n_examples();
  m["n_labels"] = b.n_labels();
  m["n_concepts"] = b.n_concepts();
  m["repr_dim"] = b.repr.cols();
  m["mm_dim"] = b.mm_image.cols();
  m["files"] = files;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

ProbeBundle read_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingFileError("bundle directory '" + dir.string() + "' not found");
  json m;
  try {
    m = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest.json: ") + e.what());
  }
  try {
    if (m.value("format", "") != "uace-bundle")
      throw ValidationError("manifest.json: not a uace bundle");
    if (m.value("dtype", "float32") != "float32" || m.value("endianness", "little") != "little")
      throw ValidationError("manifest.json: only little-endian float32 bundles are supported");
    const json& files = m.at("files");
    ProbeBundle b;
    b.repr = load_f32(dir, files, "repr");
    b.logits = load_f32(dir, files, "logits");
    b.mm_image = load_f32(dir, files, "mm_image");
    b.concept_text = load_f32(dir, files, "concept_text");
    b.concept_names = split_lines(load_checked(dir, files.at("concept_names"), "concept_names"));
    b.label_names = split_lines(load_checked(dir, files.at("label_names"), "label_names"));
    if (files.contains("annotations")) {
      const json& e = files.at("annotations");
      std::string bytes = load_checked(dir, e, "annotations");
      const auto rows = e.at("rows").get<Eigen::Index>();
      const auto cols = e.at("cols").get<Eigen::Index>();
      if (rows < 0 || cols < 0 || bytes.size() != static_cast<std::size_t>(rows * cols))
        throw DimensionError("annotations: file size disagrees with declared shape");
      MatrixU8 a(rows, cols);
      std::memcpy(a.data(), bytes.data(), bytes.size());
      b.annotations = std::move(a);
    }

    const auto n = m.at("n_examples").get<Eigen::Index>();
    const auto l = m.at("n_labels").get<Eigen::Index>();
    const auto k = m.at("n_concepts").get<Eigen::Index>();
    check_rows(b.repr.rows(), n, "repr", "rows");
    check_rows(b.logits.rows(), n, "logits", "rows");
    check_rows(b.mm_image.rows(), n, "mm_image", "rows");
    check_rows(b.logits.cols(), l, "logits", "columns");
    check_rows(b.concept_text.rows(), k, "concept_text", "rows");
    check_rows(b.repr.cols(), m.at("repr_dim").get<Eigen::Index>(), "repr", "columns");
    check_rows(b.mm_image.cols(), m.at("mm_dim").get<Eigen::Index>(), "mm_image", "columns");
    validate(b);
    return b;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest.json: ") + e.what());
  }
}

void write_matrix_dir(const fs::path& dir, const std::string& kind,
                      const std::vector<NamedMatrix>& matrices,
                      const std::vector<std::string>& concept_names) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  json files;
  for (const auto& nm : matrices) {
    MatrixF f = nm.values.cast<float>();
    const std::string name = nm.name + ".f32";
    std::string bytes = encode_f32(f.data(), static_cast<std::size_t>(f.size()));
    write_file(dir / name, bytes);
    files[nm.name] = file_entry(name, bytes, f.rows(), f.cols(), "float32");
  }
  std::string names = join_lines(concept_names);
  write_file(dir / "concept_names.txt", names);
  files["concept_names"] = {{"file", "concept_names.txt"},
                            {"count", concept_names.size()},
                            {"fnv1a64", hex64(fnv1a64(names.data(), names.size()))}};
  json m;
  m["format"] = kind;
  m["schema_version"] = kSchemaVersion;
  m["dtype"] = "float32";
  m["endianness"] = "little";
  m["layout"] = "row-major";
  m["files"] = files;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace uace
