#pragma once

#include "fsadapt/error.hpp"
#include "fsadapt/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fsadapt {

/// Mean over classes of per-class recall. Every class in [0, K) must
/// appear in `labels`.
double balanced_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes);

struct RunResult {
  std::string dataset;
  std::string method;
  int shots = 0;
  std::uint64_t seed = 0;
  double aca = 0.0;  // [0, 1]
  double wall_ms = 0.0;
  std::int64_t params = 0;
  std::string hyperparams_json = "{}";
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

struct AggregateRow {
  std::string dataset;
  std::string method;
  int shots = 0;
  double mean_aca = 0.0;
  std::optional<double> std_aca;  // undefined for a single seed
  int n_seeds = 0;
};

/// Mean and sample standard deviation (n-1 divisor) of one
/// (dataset, method, shots) group, accumulated in seed order. Failed runs
/// are skipped.
AggregateRow aggregate(std::vector<RunResult> group);

template <typename Config>
struct GridSearchResult {
  std::size_t best_index = 0;
  Config best;
  double best_score = 0.0;
  std::vector<double> scores;  // in enumeration order
};

/// Scores every config and keeps the maximizer; ties go to the earliest
/// config in enumeration order.
template <typename Config>
GridSearchResult<Config> grid_search(const std::vector<Config>& grid,
                                     const std::function<double(const Config&)>& score) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "hyperparameter grid is empty");
  GridSearchResult<Config> out;
  out.scores.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double s = score(grid[i]);
    out.scores.push_back(s);
    if (i == 0 || s > out.best_score) {
      out.best_index = i;
      out.best_score = s;
    }
  }
  out.best = grid[out.best_index];
  return out;
}

}  // namespace fsadapt
