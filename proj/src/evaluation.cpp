#include "fsadapt/evaluation.hpp"

#include <algorithm>
#include <cmath>

namespace fsadapt {

double balanced_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::DimMismatch, "predictions and labels differ in length");
  }
  std::vector<std::int64_t> total(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> correct(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes || predictions[i] < 0 || predictions[i] >= num_classes) {
      throw Error(ErrorCode::LabelOutOfRange, "class index outside [0, K)");
    }
    ++total[static_cast<std::size_t>(y)];
    if (predictions[i] == y) ++correct[static_cast<std::size_t>(y)];
  }
  double sum = 0.0;
  for (int k = 0; k < num_classes; ++k) {
    const auto t = total[static_cast<std::size_t>(k)];
    if (t == 0) throw Error(ErrorCode::MissingClass, "class " + std::to_string(k) + " absent from labels");
    sum += static_cast<double>(correct[static_cast<std::size_t>(k)]) / static_cast<double>(t);
  }
  return sum / static_cast<double>(num_classes);
}

AggregateRow aggregate(std::vector<RunResult> group) {
  std::erase_if(group, [](const RunResult& r) { return !r.ok(); });
  if (group.empty()) throw Error(ErrorCode::EmptyGroup, "no successful runs to aggregate");
  std::sort(group.begin(), group.end(), [](const RunResult& a, const RunResult& b) { return a.seed < b.seed; });
  AggregateRow row;
  row.dataset = group.front().dataset;
  row.method = group.front().method;
  row.shots = group.front().shots;
  row.n_seeds = static_cast<int>(group.size());
  double sum = 0.0;
  for (const auto& r : group) sum += r.aca;
  row.mean_aca = sum / static_cast<double>(group.size());
  if (group.size() > 1) {
    double ss = 0.0;
    for (const auto& r : group) ss += (r.aca - row.mean_aca) * (r.aca - row.mean_aca);
    row.std_aca = std::sqrt(ss / static_cast<double>(group.size() - 1));
  }
  return row;
}

}  // namespace fsadapt
