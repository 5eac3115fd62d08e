#pragma once

// Score-based membership inference attacks: entropy threshold, maximum
// score threshold, and a small MLP on the three largest scores.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <variant>

#include "mia/nn.hpp"
#include "mia/shadow.hpp"

namespace mia {

enum class AttackKind : std::uint8_t { kEntropy = 0, kMaxScore = 1, kTop3 = 2 };

const char* attack_name(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

/// Member iff max score >= tau (kMaxScore) or entropy <= tau (kEntropy).
/// Degenerate fits may return tau = +-infinity.
struct ThresholdAttack {
  AttackKind statistic = AttackKind::kMaxScore;
  double tau = 0.5;
};

/// 3 -> 64 relu -> 1 sigmoid network on descending top-3 scores.
struct Top3Attack {
  Network net;
  double cutoff = 0.5;
};

struct AttackModel {
  std::variant<ThresholdAttack, Top3Attack> model;

  [[nodiscard]] AttackKind kind() const;
  [[nodiscard]] const char* name() const { return attack_name(kind()); }
};

/// Natural-log entropy with 0 ln 0 = 0.
double entropy(const Eigen::Ref<const RowVector>& scores);

/// Three largest scores, descending, zero-padded when d < 3.
Eigen::RowVector3d top3_features(const Eigen::Ref<const RowVector>& scores);

/// Youden objective TPR - FPR for the rule "member iff value >= threshold".
struct ThresholdChoice {
  double threshold = 0.0;
  double youden = 0.0;
  long tp = 0;
  long fp = 0;
};

/// Best threshold for "member iff value >= threshold" over the candidate set
/// {-inf, midpoints between consecutive distinct values, +inf}. Ties go to the
/// candidate with the fewest predicted members (lowest FPR).
ThresholdChoice best_upper_threshold(std::span<const double> values, std::span<const int> truths);

ThresholdAttack fit_max_score_threshold(std::span<const MembershipRecord> records);
ThresholdAttack fit_entropy_threshold(std::span<const MembershipRecord> records);

struct Top3FitConfig {
  int hidden = 64;
  double lr = 0.01;
  int batch_size = 16;
  int patience = 15;
  double min_delta = 5e-4;
  int max_epochs = 500;
  double cutoff = 0.5;
};

Top3Attack fit_top3(std::span<const MembershipRecord> records, std::uint64_t seed,
                    const Top3FitConfig& cfg = {});

struct MembershipPrediction {
  int decision = 0;
  double raw_score = 0.0;  // max score, negated entropy, or sigmoid output
};

MembershipPrediction predict_membership(const AttackModel& attack,
                                        const Eigen::Ref<const RowVector>& scores);

/// Row-wise predictions for a score matrix.
std::vector<MembershipPrediction> predict_membership_batch(const AttackModel& attack,
                                                           const Eigen::Ref<const Matrix>& scores);

struct SweepRow {
  double delta = 1.0;
  double mean_max_score = 0.0;
  std::vector<double> member_fraction;  // one per attack, same order as input
};

/// Scales the (normalized) non-member inputs by each delta and reports how
/// many are classified as members.
std::vector<SweepRow> scaling_sweep(const Network& net, std::span<const AttackModel> attacks,
                                    const LabeledDataset& nonmembers_normalized,
                                    std::span<const double> deltas, double temperature = 1.0);

/// Attack file: magic "MIAA", u32 version, u8 kind, f64 tau, f64 cutoff,
/// u8 has_network, then a network blob (see serialize.hpp) for top-3.
void save_attack(const std::filesystem::path& path, const AttackModel& attack);
AttackModel load_attack(const std::filesystem::path& path);

}  // namespace mia
