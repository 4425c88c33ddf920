#pragma once

#include "fsadapt/embedding_store.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fsadapt {

struct PredefinedSplit {
  std::vector<Index> test_indices;
};

struct Holdout {
  double fraction = 0.20;
};

using TestPolicy = std::variant<PredefinedSplit, Holdout>;

struct EpisodeSpec {
  int shots = 1;
  std::optional<int> val_shots;  // defaults to `shots`
  std::uint64_t seed = 0;
  TestPolicy test_policy = Holdout{};

  int validation_shots() const { return val_shots.value_or(shots); }
  /// Shot counts outside {1,2,4,8,16} are accepted but non-standard.
  bool standard_shots() const;
  void validate() const;
};

struct FewShotEpisode {
  std::vector<std::vector<Index>> support;     // per class, `shots` each
  std::vector<std::vector<Index>> validation;  // per class, `val_shots` each
  std::vector<Index> test;                     // ascending
  EpisodeSpec spec;

  std::vector<Index> flat_support() const;
  std::vector<Index> flat_validation() const;
  std::string to_json() const;
};

/// Stream identifiers for the per-(seed, class) PCG64 streams.
inline constexpr std::uint64_t kHoldoutStreamBase = 0xFFFFFFFFull;
unsigned __int128 support_stream(int class_index);
unsigned __int128 holdout_stream(int class_index);

/// Draws one episode. The holdout test set (if any) is drawn first, so the
/// test split for a seed never depends on `shots`. Each class uses its own
/// stream: a forward Fisher-Yates pass over its eligible indices, the first
/// `shots` going to support and the next `val_shots` to validation.
FewShotEpisode sample_episode(const LabeledDataset& ds, const EpisodeSpec& spec);

/// [base, base+1, ..., base+n-1]
std::vector<std::uint64_t> seed_schedule(std::uint64_t base_seed, int n_seeds = 5);

/// Reads a JSON array of test indices (or an object with a "test" array).
std::vector<Index> load_test_indices(const std::filesystem::path& path);

}  // namespace fsadapt
