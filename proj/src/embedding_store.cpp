#include "fsadapt/embedding_store.hpp"

#include "fsadapt/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fsadapt {

namespace fs = std::filesystem;

EmbeddingMatrix::EmbeddingMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw Error(ErrorCode::DimMismatch, "embedding matrix needs at least one row and one column");
  }
  if (!values_.allFinite()) {
    throw Error(ErrorCode::NonFiniteValue, "embedding matrix contains NaN or Inf");
  }
}

void LabeledDataset::validate() const {
  if (static_cast<Index>(labels.size()) != embeddings.rows()) {
    throw Error(ErrorCode::DimMismatch, "labels length " + std::to_string(labels.size()) +
                                            " != rows " + std::to_string(embeddings.rows()));
  }
  const int k = num_classes();
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (int y : labels) {
    if (y < 0 || y >= k) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (int c = 0; c < k; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw Error(ErrorCode::MissingClass, "class " + std::to_string(c) + " has no samples");
    }
  }
}

std::vector<std::vector<Index>> LabeledDataset::class_indices() const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(num_classes()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  }
  return out;
}

namespace {

// Explicit little-endian encoding, independent of host byte order.
template <typename U>
void put_le(std::string& buf, U value) {
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    buf.push_back(static_cast<char>((value >> (8 * b)) & 0xFF));
  }
}

template <typename U>
U get_le(const unsigned char* p) {
  U value = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) value |= static_cast<U>(p[b]) << (8 * b);
  return value;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 4 + 4;

std::string encode(const Matrix& values, const Labels& labels, std::uint32_t k) {
  const auto n = static_cast<std::uint64_t>(values.rows());
  const auto d = static_cast<std::uint32_t>(values.cols());
  std::string buf;
  buf.reserve(kHeaderBytes + n * d * 4 + n * 4);
  buf.append(kFsebMagic, 4);
  put_le<std::uint32_t>(buf, kFsebVersion);
  put_le<std::uint64_t>(buf, n);
  put_le<std::uint32_t>(buf, d);
  put_le<std::uint32_t>(buf, k);
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(static_cast<float>(values(i, j))));
    }
  }
  for (int y : labels) put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(static_cast<std::int32_t>(y)));
  return buf;
}

struct Decoded {
  Matrix values;
  Labels labels;
  std::uint32_t k = 0;
};

Decoded decode(const std::string& bytes, const std::string& origin) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || std::memcmp(p, kFsebMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, origin + " does not start with FSEB");
  }
  if (bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::DimMismatch, origin + " is truncated inside the header");
  }
  const auto version = get_le<std::uint32_t>(p + 4);
  if (version != kFsebVersion) {
    throw Error(ErrorCode::VersionUnsupported, origin + " has version " + std::to_string(version));
  }
  const auto n = get_le<std::uint64_t>(p + 8);
  const auto d = get_le<std::uint32_t>(p + 16);
  const auto k = get_le<std::uint32_t>(p + 20);
  if (n == 0 || d == 0) throw Error(ErrorCode::DimMismatch, origin + " declares an empty matrix");
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  // Guard the multiplication before trusting it.
  if (n > payload / 4 || d > payload / 4 || n * d > payload / 4 || (n * d + n) * 4 != payload) {
    std::ostringstream msg;
    msg << origin << " declares N=" << n << ", D=" << d << " but carries " << payload
        << " payload bytes (expected " << (n * d + n) * 4 << ")";
    throw Error(ErrorCode::DimMismatch, msg.str());
  }
  Decoded out;
  out.k = k;
  out.values.resize(static_cast<Index>(n), static_cast<Index>(d));
  const unsigned char* q = p + kHeaderBytes;
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, q += 4) {
      const float v = std::bit_cast<float>(get_le<std::uint32_t>(q));
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteValue,
                    origin + " row " + std::to_string(i) + " col " + std::to_string(j) + " is not finite");
      }
      out.values(static_cast<Index>(i), static_cast<Index>(j)) = static_cast<double>(v);
    }
  }
  out.labels.resize(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i, q += 4) {
    const auto y = std::bit_cast<std::int32_t>(get_le<std::uint32_t>(q));
    if (y < 0 || static_cast<std::uint32_t>(y) >= k) {
      throw Error(ErrorCode::LabelOutOfRange, origin + " row " + std::to_string(i) + " label " +
                                                  std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    out.labels[static_cast<std::size_t>(i)] = y;
  }
  return out;
}

std::vector<std::string> default_class_names(std::uint32_t k) {
  std::vector<std::string> names;
  for (std::uint32_t c = 0; c < k; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

}  // namespace

LabeledDataset load_dataset(const fs::path& path) {
  Decoded raw = decode(read_file(path), path.string());
  LabeledDataset ds{EmbeddingMatrix(std::move(raw.values)), std::move(raw.labels), default_class_names(raw.k)};
  ds.validate();
  return ds;
}

void save_dataset(const LabeledDataset& ds, const fs::path& path) {
  ds.validate();
  write_file(path, encode(ds.embeddings.values(), ds.labels, static_cast<std::uint32_t>(ds.num_classes())));
}

TextPrototypeSet load_prototypes(const fs::path& path) {
  Decoded raw = decode(read_file(path), path.string());
  for (std::size_t i = 0; i < raw.labels.size(); ++i) {
    if (raw.labels[i] != static_cast<int>(i) || raw.labels.size() != raw.k) {
      throw Error(ErrorCode::DimMismatch, path.string() + " is not a prototype file (labels must be 0..K-1)");
    }
  }
  TextPrototypeSet protos;
  protos.prototypes = EmbeddingMatrix(std::move(raw.values));
  protos.prompts = default_class_names(raw.k);
  return protos;
}

void save_prototypes(const TextPrototypeSet& protos, const fs::path& path) {
  const auto k = static_cast<std::uint32_t>(protos.prototypes.rows());
  Labels labels(k);
  for (std::uint32_t i = 0; i < k; ++i) labels[i] = static_cast<int>(i);
  write_file(path, encode(protos.prototypes.values(), labels, k));
}

std::string DatasetManifest::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["K"] = num_classes;
  j["N"] = num_samples;
  j["D"] = dim;
  j["class_names"] = class_names;
  if (!prompts.empty()) j["prompts"] = prompts;
  j["normalized"] = normalized;
  if (temperature_hint) j["temperature_hint"] = *temperature_hint;
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.name = j.at("name").get<std::string>();
    m.num_classes = j.at("K").get<Index>();
    m.num_samples = j.at("N").get<Index>();
    m.dim = j.at("D").get<Index>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("prompts")) m.prompts = j["prompts"].get<std::vector<std::string>>();
    m.normalized = j.value("normalized", true);
    if (j.contains("temperature_hint") && !j["temperature_hint"].is_null()) {
      m.temperature_hint = j["temperature_hint"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("manifest: ") + e.what());
  }
  if (static_cast<Index>(m.class_names.size()) != m.num_classes) {
    throw Error(ErrorCode::SchemaError, "manifest: class_names length != K");
  }
  if (!m.prompts.empty() && static_cast<Index>(m.prompts.size()) != m.num_classes) {
    throw Error(ErrorCode::SchemaError, "manifest: prompts length != K");
  }
  if (m.temperature_hint && !(*m.temperature_hint > 0.0)) {
    throw Error(ErrorCode::SchemaError, "manifest: temperature_hint must be positive");
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  return DatasetManifest::from_json(read_file(path));
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_file(path, manifest.to_json());
}

fs::path manifest_path_for(const fs::path& fseb_path) {
  return fseb_path.parent_path() / (fseb_path.stem().string() + ".manifest.json");
}

LabeledDataset read_csv_dataset(const fs::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaError, path.string() + ": empty CSV");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      cells.push_back(cell);
    }
    return cells;
  };
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "label") {
    throw Error(ErrorCode::SchemaError, path.string() + ":1: header must be label,f0,...");
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 1] != "f" + std::to_string(j)) {
      throw Error(ErrorCode::SchemaError, path.string() + ":1: expected column f" + std::to_string(j));
    }
  }
  std::vector<double> values;
  Labels labels;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (cells.size() != d + 1) {
      throw Error(ErrorCode::DimMismatch, where + "expected " + std::to_string(d + 1) + " cells, got " +
                                              std::to_string(cells.size()));
    }
    try {
      std::size_t used = 0;
      const int y = std::stoi(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument(cells[0]);
      labels.push_back(y);
      for (std::size_t j = 0; j < d; ++j) {
        const double v = std::stod(cells[j + 1], &used);
        if (used != cells[j + 1].size()) throw std::invalid_argument(cells[j + 1]);
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, where + "non-finite value");
        values.push_back(v);
      }
    } catch (const std::logic_error& e) {
      throw Error(ErrorCode::SchemaError, where + "cannot parse '" + e.what() + "'");
    }
    if (labels.back() < 0 || (num_classes > 0 && labels.back() >= num_classes)) {
      throw Error(ErrorCode::LabelOutOfRange, where + "label " + std::to_string(labels.back()) +
                                                  " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (labels.empty()) throw Error(ErrorCode::DimMismatch, path.string() + ": no data rows");
  const int k = num_classes > 0 ? num_classes : *std::max_element(labels.begin(), labels.end()) + 1;
  Matrix m = Eigen::Map<Matrix>(values.data(), static_cast<Index>(labels.size()), static_cast<Index>(d));
  LabeledDataset ds{EmbeddingMatrix(std::move(m)), std::move(labels), default_class_names(static_cast<std::uint32_t>(k))};
  ds.validate();
  return ds;
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (!(norm >= kZeroNormThreshold)) {
      throw Error(ErrorCode::ZeroNormRow, "row " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
    out.row(i) /= norm;
  }
  return out;
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
  return EmbeddingMatrix(l2_normalize_rows(m.values()));
}

bool rows_unit_norm(const Matrix& m, double tol) {
  for (Index i = 0; i < m.rows(); ++i) {
    if (std::abs(m.row(i).norm() - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace fsadapt
