#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace fsadapt {

/// Row-major dense matrix; rows are samples (or classes), columns are
/// embedding coordinates.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;
using Index = std::int64_t;

/// Row-wise argmax; ties resolve to the lowest column index.
std::vector<int> argmax_rows(const Matrix& scores);

/// Gathers the given rows of `m` in order.
Matrix take_rows(const Matrix& m, const std::vector<Index>& rows);

}  // namespace fsadapt
