#pragma once

// Attack preparation: train target and shadow models with one recipe on
// disjoint splits, query them, and collect labeled score records.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "mia/data.hpp"
#include "mia/nn.hpp"

namespace mia {

struct MembershipRecord {
  RowVector scores;
  bool is_member = false;
  std::string source_tag;
};

using Records = std::vector<MembershipRecord>;

/// Stage indices mixed into the master seed by derive_seed().
enum class Stage : std::uint64_t {
  kData = 1,
  kSplit = 2,
  kTrain = 3,
  kBalance = 4,
  kAttack = 5,
  kEvalData = 6,
  kEvalSubset = 7,
};

std::uint64_t stage_seed(std::uint64_t master, Stage stage, std::uint64_t sub = 0);

struct PreparationConfig {
  MixtureSpec data;
  Eigen::Index pool_size = 1600;
  std::array<double, 4> fractions{0.25, 0.25, 0.25, 0.25};
  NetworkConfig network;
  TrainConfig training;
  double temperature = 1.0;
  std::uint64_t seed = 42;
};

struct Preparation {
  DisjointSplits raw_splits;
  NormStats stats;
  std::array<LabeledDataset, 4> splits;  // normalized with target-train stats
  Network target;
  Network shadow;
  std::vector<EpochStats> target_history;
  std::vector<EpochStats> shadow_history;
  TrainConfig train_config;  // the one recipe used for both models
  Records attack_training;

  const LabeledDataset& operator[](Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

/// Both models use the same TrainConfig, whose seed is derived from the
/// master seed. Attack training records are shadow-train (members) and
/// shadow-test (non-members), balanced.
Preparation run_preparation(const PreparationConfig& config);

Records collect_records(const Network& model, const LabeledDataset& ds, bool is_member,
                        double temperature, const std::string& tag);

/// Subsamples the larger class down to the smaller one; kept records keep
/// their relative order.
Records balance(const Records& records, std::uint64_t seed);

Matrix score_matrix(std::span<const MembershipRecord> records);

/// CSV `s0,...,s{d-1},is_member,tag`.
void save_records(std::span<const MembershipRecord> records, const std::filesystem::path& path);
Records load_records(const std::filesystem::path& path);

}  // namespace mia
