#pragma once

// Attack and calibration metrics: confusion-based rates, ROC / PR areas,
// ECE / OE, mean maximum prediction score, 1-D earth mover's distance and
// Gaussian kernel density estimates.

#include <limits>
#include <span>
#include <string>

#include "mia/attacks.hpp"
#include "mia/shadow.hpp"

namespace mia {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;

  [[nodiscard]] long total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const int> decisions, std::span<const int> truths);

// A zero denominator yields 0; the *_degenerate helpers report that case.
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double fpr(const ConfusionCounts& c);
inline bool precision_degenerate(const ConfusionCounts& c) { return c.tp + c.fp == 0; }
inline bool fpr_degenerate(const ConfusionCounts& c) { return c.fp + c.tn == 0; }

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  long fp = 0;
  long tp = 0;
  double threshold = 0.0;  // score >= threshold counts as positive
};

/// Points for thresholds at every distinct score, highest first, starting at
/// (0, 0) and ending at (1, 1).
struct RocCurve {
  std::vector<RocPoint> points;
  long positives = 0;
  long negatives = 0;
};

RocCurve roc_curve(std::span<const double> scores, std::span<const int> truths);

/// Trapezoidal area, accumulated in integer counts so it equals the
/// Mann-Whitney pair statistic (ties count 1/2) exactly.
double auroc(const RocCurve& curve);

/// Step-wise average precision: sum over distinct descending thresholds of
/// (R_k - R_{k-1}) * P_k.
double auprc(std::span<const double> scores, std::span<const int> truths);

/// Minimum FPR over curve points with TPR >= target.
double fpr_at_tpr(const RocCurve& curve, double target_tpr = 0.95);

/// Mean of per-row maxima.
double mmps(const Eigen::Ref<const Matrix>& scores);

enum class CalibrationKey {
  kTrueClassScore,  // bin by the score assigned to the true class
  kMaxConfidence,   // bin by the maximum score
};

struct CalibrationBin {
  long count = 0;
  double accuracy = 0.0;  // argmax accuracy within the bin
  double score = 0.0;     // mean binning-key score within the bin
};

/// K equal-width bins over [0, 1]; a key of exactly 1 falls in the last bin.
std::vector<CalibrationBin> calibration_bins(const Eigen::Ref<const Matrix>& scores,
                                             std::span<const int> labels, int bins = 15,
                                             CalibrationKey key = CalibrationKey::kTrueClassScore);

double ece(const Eigen::Ref<const Matrix>& scores, std::span<const int> labels, int bins = 15,
           CalibrationKey key = CalibrationKey::kTrueClassScore);
double oe(const Eigen::Ref<const Matrix>& scores, std::span<const int> labels, int bins = 15,
          CalibrationKey key = CalibrationKey::kTrueClassScore);

/// Wasserstein-1 distance between two empirical distributions (integral of
/// the absolute CDF difference); sizes may differ.
double emd_1d(std::span<const double> a, std::span<const double> b);

/// Scott's rule h = std * n^(-1/5) (sample std, ddof 1), floored at
/// kMinBandwidth so constant samples still yield a proper density.
inline constexpr double kMinBandwidth = 1e-3;
double scott_bandwidth(std::span<const double> samples);

Vector kde_gaussian(std::span<const double> samples, std::span<const double> grid,
                    double bandwidth);

/// Evenly spaced grid covering [min - 6h, max + 6h] with spacing at most h/4.
std::vector<double> kde_grid(std::span<const double> samples, double bandwidth,
                             int min_points = 256);

/// Trapezoidal integral of y over x.
double trapezoid(std::span<const double> x, std::span<const double> y);

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EvalReport {
  std::string attack;
  std::string dataset;
  ConfusionCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double fpr = 0.0;
  bool precision_degenerate = false;
  bool fpr_degenerate = false;
  double auroc = kNaN;
  double auprc = kNaN;
  double fpr_at_95tpr = kNaN;
  double mmps_fp = kNaN;  // NaN when there are no false positives
  double mmps_tn = kNaN;  // NaN when there are no true negatives
  double ece = kNaN;      // filled from the target model's held-out data
  double oe = kNaN;
  double emd_vs_members = kNaN;
};

EvalReport evaluate_attack(const AttackModel& attack, std::span<const MembershipRecord> records);

}  // namespace mia
