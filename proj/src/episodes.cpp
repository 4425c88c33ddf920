#include "fsadapt/episodes.hpp"

#include "fsadapt/error.hpp"
#include "fsadapt/pcg64.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

namespace fsadapt {

bool EpisodeSpec::standard_shots() const {
  return shots == 1 || shots == 2 || shots == 4 || shots == 8 || shots == 16;
}

void EpisodeSpec::validate() const {
  if (shots < 1) throw Error(ErrorCode::ConfigError, "shots must be >= 1");
  if (validation_shots() < 0) throw Error(ErrorCode::ConfigError, "val_shots must be >= 0");
  if (const auto* h = std::get_if<Holdout>(&test_policy)) {
    if (!(h->fraction > 0.0 && h->fraction < 1.0)) {
      throw Error(ErrorCode::ConfigError, "holdout fraction must lie in (0, 1)");
    }
  }
}

unsigned __int128 support_stream(int class_index) {
  return static_cast<unsigned __int128>(static_cast<std::uint32_t>(class_index));
}

unsigned __int128 holdout_stream(int class_index) {
  return (static_cast<unsigned __int128>(static_cast<std::uint32_t>(class_index)) << 32u) + kHoldoutStreamBase;
}

namespace {

// Forward Fisher-Yates; only the first `count` positions are finalized,
// which is exactly the prefix a full shuffle would produce.
void partial_shuffle(std::vector<Index>& items, std::size_t count, Pcg64& rng) {
  const std::size_t n = items.size();
  for (std::size_t i = 0; i < count && i + 1 < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.bounded(n - i));
    std::swap(items[i], items[j]);
  }
}

}  // namespace

FewShotEpisode sample_episode(const LabeledDataset& ds, const EpisodeSpec& spec) {
  spec.validate();
  const auto per_class = ds.class_indices();
  const int k = ds.num_classes();
  const Index n = ds.size();

  std::vector<char> in_test(static_cast<std::size_t>(n), 0);
  FewShotEpisode ep;
  ep.spec = spec;

  if (const auto* pre = std::get_if<PredefinedSplit>(&spec.test_policy)) {
    for (Index idx : pre->test_indices) {
      if (idx < 0 || idx >= n) {
        throw Error(ErrorCode::BadTestIndices, "test index " + std::to_string(idx) + " out of range");
      }
      if (in_test[static_cast<std::size_t>(idx)]) {
        throw Error(ErrorCode::BadTestIndices, "test index " + std::to_string(idx) + " duplicated");
      }
      in_test[static_cast<std::size_t>(idx)] = 1;
      ep.test.push_back(idx);
    }
  } else {
    const double fraction = std::get<Holdout>(spec.test_policy).fraction;
    for (int c = 0; c < k; ++c) {
      std::vector<Index> pool = per_class[static_cast<std::size_t>(c)];
      const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pool.size()) + 0.5));
      Pcg64 rng(spec.seed, holdout_stream(c));
      partial_shuffle(pool, take, rng);
      for (std::size_t i = 0; i < take; ++i) {
        in_test[static_cast<std::size_t>(pool[i])] = 1;
        ep.test.push_back(pool[i]);
      }
    }
  }
  std::sort(ep.test.begin(), ep.test.end());

  const auto shots = static_cast<std::size_t>(spec.shots);
  const auto val = static_cast<std::size_t>(spec.validation_shots());
  ep.support.resize(static_cast<std::size_t>(k));
  ep.validation.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    std::vector<Index> eligible;
    for (Index idx : per_class[static_cast<std::size_t>(c)]) {
      if (!in_test[static_cast<std::size_t>(idx)]) eligible.push_back(idx);
    }
    if (eligible.size() < shots + val) {
      throw Error(ErrorCode::InsufficientSamples,
                  "class " + std::to_string(c) + " needs " + std::to_string(shots + val) + " samples, " +
                      std::to_string(eligible.size()) + " available");
    }
    Pcg64 rng(spec.seed, support_stream(c));
    partial_shuffle(eligible, shots + val, rng);
    auto& sup = ep.support[static_cast<std::size_t>(c)];
    auto& va = ep.validation[static_cast<std::size_t>(c)];
    sup.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(shots));
    va.assign(eligible.begin() + static_cast<std::ptrdiff_t>(shots),
              eligible.begin() + static_cast<std::ptrdiff_t>(shots + val));
  }
  return ep;
}

std::vector<Index> FewShotEpisode::flat_support() const {
  std::vector<Index> out;
  for (const auto& s : support) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::vector<Index> FewShotEpisode::flat_validation() const {
  std::vector<Index> out;
  for (const auto& s : validation) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::string FewShotEpisode::to_json() const {
  nlohmann::ordered_json j;
  j["shots"] = spec.shots;
  j["val_shots"] = spec.validation_shots();
  j["seed"] = spec.seed;
  if (const auto* h = std::get_if<Holdout>(&spec.test_policy)) {
    j["test_policy"] = {{"holdout", h->fraction}};
  } else {
    j["test_policy"] = "predefined";
  }
  j["support"] = support;
  j["validation"] = validation;
  j["test"] = test;
  return j.dump();
}

std::vector<std::uint64_t> seed_schedule(std::uint64_t base_seed, int n_seeds) {
  if (n_seeds < 1) throw Error(ErrorCode::ConfigError, "n_seeds must be >= 1");
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n_seeds; ++i) out.push_back(base_seed + static_cast<std::uint64_t>(i));
  return out;
}

std::vector<Index> load_test_indices(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  try {
    auto j = nlohmann::json::parse(in);
    if (j.is_object()) j = j.at("test");
    return j.get<std::vector<Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadTestIndices, path.string() + ": " + e.what());
  }
}

}  // namespace fsadapt
