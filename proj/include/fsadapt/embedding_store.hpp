#pragma once

#include "fsadapt/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fsadapt {

/// N x D block of embedding coordinates. Validated on construction: at
/// least one row and column, every value finite.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(Matrix values);

  Index rows() const { return values_.rows(); }
  Index dim() const { return values_.cols(); }
  const Matrix& values() const { return values_; }

 private:
  Matrix values_;
};

struct LabeledDataset {
  EmbeddingMatrix embeddings;
  Labels labels;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  Index size() const { return embeddings.rows(); }
  Index dim() const { return embeddings.dim(); }

  /// Throws DimMismatch / LabelOutOfRange / MissingClass when the
  /// labels, class names and rows disagree.
  void validate() const;

  /// Ordered row indices of each class.
  std::vector<std::vector<Index>> class_indices() const;
};

struct TextPrototypeSet {
  EmbeddingMatrix prototypes;  // K x D
  std::vector<std::string> prompts;
  std::optional<double> temperature_hint;

  int num_classes() const { return static_cast<int>(prototypes.rows()); }
};

struct DatasetManifest {
  std::string name;
  Index num_classes = 0;
  Index num_samples = 0;
  Index dim = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> prompts;
  bool normalized = true;
  std::optional<double> temperature_hint;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

inline constexpr char kFsebMagic[4] = {'F', 'S', 'E', 'B'};
inline constexpr std::uint32_t kFsebVersion = 1;
inline constexpr double kZeroNormThreshold = 1e-12;

/// Reads an FSEB file. Class names default to "class_<k>" since the binary
/// payload carries only K.
LabeledDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);

/// Prototypes are stored as an FSEB file with N = K and labels 0..K-1.
TextPrototypeSet load_prototypes(const std::filesystem::path& path);
void save_prototypes(const TextPrototypeSet& protos, const std::filesystem::path& path);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Sidecar location for a payload: `dir/<stem>.manifest.json`.
std::filesystem::path manifest_path_for(const std::filesystem::path& fseb_path);

/// Parses `label,f0,...,f{D-1}` CSV. `num_classes` of 0 infers K from the
/// largest label. Errors carry the offending line number.
LabeledDataset read_csv_dataset(const std::filesystem::path& path, int num_classes = 0);

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);
Matrix l2_normalize_rows(const Matrix& m);

/// True when every row has Euclidean norm 1 within `tol`.
bool rows_unit_norm(const Matrix& m, double tol = 1e-6);

}  // namespace fsadapt
