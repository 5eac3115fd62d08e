#pragma once

// Config-driven experiment harness: prepare target/shadow models, fit the
// three attacks, evaluate them on member vs. non-member datasets, and write
// reports. Also hosts the scaling sweep and the cross-run report.

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mia/attacks.hpp"
#include "mia/data.hpp"
#include "mia/metrics.hpp"
#include "mia/nn.hpp"
#include "mia/shadow.hpp"

namespace mia {

inline constexpr const char* kToolkitVersion = "1.0.0";

enum class ScenarioKind { kStandard, kLabelSmoothing, kTemperature, kL2 };

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kStandard;
  double value = 0.0;  // alpha, T or lambda; unused for standard

  [[nodiscard]] std::string name() const;
  bool operator==(const ScenarioSpec&) const = default;
};

enum class EvalKind { kHeldOut, kFake, kShifted, kUniformNoise, kPermuted, kScaled };

const char* eval_kind_name(EvalKind kind);

struct DataSettings {
  int num_classes = 4;
  int dim = 2;
  double radius = 1.0;
  double std = 1.5;
  Eigen::Index pool_size = 300;
  std::array<double, 4> fractions{0.2, 0.3, 0.2, 0.3};
};

struct ScenarioDefaults {
  double label_smoothing = 0.1;
  double temperature = 10.0;
  double l2 = 0.015;
};

struct EvaluationSettings {
  Eigen::Index subset_size = 60;
  int ece_bins = 15;
  CalibrationKey ece_key = CalibrationKey::kTrueClassScore;
  double shift = 1.0;  // added to every raw feature of the shifted set
  double scaled_delta = 255.0;
  std::vector<EvalKind> datasets{EvalKind::kHeldOut,      EvalKind::kFake,
                                 EvalKind::kShifted,      EvalKind::kUniformNoise,
                                 EvalKind::kPermuted,     EvalKind::kScaled};
};

struct SweepSettings {
  std::vector<double> deltas{1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6};
  Eigen::Index samples = 500;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  ScenarioSpec scenario;
  DataSettings data;
  NetworkConfig network;  // input_dim / num_classes are taken from `data`
  TrainConfig training;   // seed is derived from the master seed
  double temperature = 1.0;
  ScenarioDefaults scenarios;
  Top3FitConfig attack;
  EvaluationSettings evaluation;
  SweepSettings sweep;
  std::string output = "runs/default";

  /// Throws InvalidArgument on any inconsistent setting.
  void validate() const;
};

/// Defaults used when a key is absent from the config file.
ExperimentConfig default_config();

/// Parses a JSON config. Unknown keys and type errors raise InvalidArgument
/// naming the key and its line in `text`.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

ScenarioSpec parse_scenario(std::string_view text, const ScenarioDefaults& defaults);

/// Preparation settings with the scenario applied to both target and shadow.
PreparationConfig preparation_config(const ExperimentConfig& cfg);

struct ModelSummary {
  double target_train_accuracy = 0.0;
  double target_test_accuracy = 0.0;
  double shadow_train_accuracy = 0.0;
  double shadow_test_accuracy = 0.0;
  double ece = 0.0;  // target model on the held-out test split
  double oe = 0.0;
};

struct EvalSet {
  std::string name;
  LabeledDataset nonmembers;  // normalized
  Records records;            // members followed by non-members, target scores
};

struct ExperimentResult {
  ExperimentConfig config;
  Preparation prep;
  std::vector<AttackModel> attacks;  // entropy, max_score, top3
  LabeledDataset members;            // normalized target-train subset used for evaluation
  std::vector<EvalSet> eval_sets;
  std::vector<EvalReport> reports;  // attack-major, dataset-minor
  ModelSummary model;
};

/// Builds the evaluation datasets (normalized) from a finished preparation.
std::vector<std::pair<std::string, LabeledDataset>> build_eval_datasets(
    const ExperimentConfig& cfg, const Preparation& prep);

std::vector<AttackModel> fit_attacks(const ExperimentConfig& cfg, const Records& training);

/// Full in-memory pipeline: prepare, fit attacks, evaluate every dataset.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Evaluation half of run_experiment() for an existing preparation and
/// fitted attacks.
ExperimentResult evaluate_prepared(const ExperimentConfig& cfg, Preparation prep,
                                   std::vector<AttackModel> attacks);

/// Fresh non-member samples (normalized) used by the scaling sweep.
LabeledDataset sweep_nonmembers(const ExperimentConfig& cfg, const NormStats& stats);

nlohmann::ordered_json report_to_json(const EvalReport& rep);
std::string report_csv_header();
std::string report_csv_row(const EvalReport& rep);

/// Deterministic report document (no timings).
nlohmann::ordered_json result_to_json(const ExperimentResult& result);

/// 64-bit FNV-1a of the canonical config JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// CLI-level commands. Each writes into `out_dir` plus a manifest there
// (manifest.json; sweep_manifest.json for the scaling sweep).
void cmd_generate_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_scaling_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_dir);

/// Sweep table CSV: delta,mean_max_score,frac_member_entropy,frac_member_max,frac_member_top3.
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace mia
