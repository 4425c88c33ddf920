#include "fsadapt/error.hpp"
#include "fsadapt/types.hpp"

namespace fsadapt {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::BadTestIndices: return "BadTestIndices";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::LineSearchFailure: return "LineSearchFailure";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::UnknownMethod: return "UnknownMethod";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index i = 0; i < scores.rows(); ++i) {
    int best = 0;
    for (Index k = 1; k < scores.cols(); ++k) {
      if (scores(i, k) > scores(i, best)) best = static_cast<int>(k);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Matrix take_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace fsadapt
