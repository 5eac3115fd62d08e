#include "mia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mia {

ConfusionCounts confusion(std::span<const int> decisions, std::span<const int> truths) {
  if (decisions.size() != truths.size()) {
    throw InvalidArgument("confusion: " + std::to_string(decisions.size()) + " decisions for " +
                          std::to_string(truths.size()) + " truths");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const bool d = decisions[i] != 0;
    const bool t = truths[i] != 0;
    if (d && t) ++c.tp;
    else if (d) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {
double ratio(long num, long den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

double precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp); }
double recall(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
double fpr(const ConfusionCounts& c) { return ratio(c.fp, c.fp + c.tn); }

namespace {

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> truths) {
  if (scores.size() != truths.size()) throw InvalidArgument("roc: length mismatch");
  RocCurve curve;
  for (int t : truths) (t != 0 ? curve.positives : curve.negatives) += 1;
  if (curve.positives == 0 || curve.negatives == 0) {
    throw InvalidArgument("roc: both classes required");
  }
  curve.points.push_back({0.0, 0.0, 0, 0, std::numeric_limits<double>::infinity()});
  const auto order = descending_order(scores);
  long tp = 0;
  long fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      (truths[order[i]] != 0 ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back({ratio(fp, curve.negatives), ratio(tp, curve.positives), fp, tp, v});
  }
  return curve;
}

double auroc(const RocCurve& curve) {
  if (curve.positives == 0 || curve.negatives == 0) throw InvalidArgument("auroc: empty curve");
  long long twice_area = 0;
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    twice_area += static_cast<long long>(b.fp - a.fp) * (a.tp + b.tp);
  }
  return static_cast<double>(twice_area) /
         (2.0 * static_cast<double>(curve.positives) * static_cast<double>(curve.negatives));
}

double auprc(std::span<const double> scores, std::span<const int> truths) {
  if (scores.size() != truths.size()) throw InvalidArgument("auprc: length mismatch");
  const long pos = std::count_if(truths.begin(), truths.end(), [](int t) { return t != 0; });
  if (pos == 0) throw InvalidArgument("auprc: at least one positive required");
  const auto order = descending_order(scores);
  long tp = 0;
  long fp = 0;
  double prev_recall = 0.0;
  double area = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      (truths[order[i]] != 0 ? tp : fp) += 1;
      ++i;
    }
    const double r = static_cast<double>(tp) / static_cast<double>(pos);
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (r - prev_recall) * p;
    prev_recall = r;
  }
  return area;
}

double fpr_at_tpr(const RocCurve& curve, double target_tpr) {
  double best = 1.0;
  for (const auto& p : curve.points) {
    if (p.tpr >= target_tpr) best = std::min(best, p.fpr);
  }
  return best;
}

double mmps(const Eigen::Ref<const Matrix>& scores) {
  if (scores.rows() == 0) throw InvalidArgument("mmps: no score vectors");
  return scores.rowwise().maxCoeff().mean();
}

std::vector<CalibrationBin> calibration_bins(const Eigen::Ref<const Matrix>& scores,
                                             std::span<const int> labels, int bins,
                                             CalibrationKey key) {
  if (bins <= 0) throw InvalidArgument("calibration: bins must be positive");
  if (static_cast<Eigen::Index>(labels.size()) != scores.rows()) {
    throw InvalidArgument("calibration: label count does not match score rows");
  }
  if (scores.rows() == 0) throw InvalidArgument("calibration: no samples");
  std::vector<CalibrationBin> out(static_cast<std::size_t>(bins));
  std::vector<double> score_sum(out.size(), 0.0);
  std::vector<long> correct(out.size(), 0);
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= scores.cols()) throw InvalidArgument("calibration: label out of range");
    const int pred = argmax(scores.row(r));
    const double k = key == CalibrationKey::kTrueClassScore ? scores(r, y) : scores(r, pred);
    const auto b = static_cast<std::size_t>(
        std::clamp(static_cast<int>(std::floor(k * bins)), 0, bins - 1));
    out[b].count += 1;
    score_sum[b] += k;
    correct[b] += pred == y ? 1 : 0;
  }
  for (std::size_t b = 0; b < out.size(); ++b) {
    if (out[b].count == 0) continue;
    out[b].accuracy = static_cast<double>(correct[b]) / static_cast<double>(out[b].count);
    out[b].score = score_sum[b] / static_cast<double>(out[b].count);
  }
  return out;
}

double ece(const Eigen::Ref<const Matrix>& scores, std::span<const int> labels, int bins,
           CalibrationKey key) {
  const auto b = calibration_bins(scores, labels, bins, key);
  const auto n = static_cast<double>(scores.rows());
  double total = 0.0;
  for (const auto& bin : b) {
    total += static_cast<double>(bin.count) / n * std::abs(bin.accuracy - bin.score);
  }
  return total;
}

double oe(const Eigen::Ref<const Matrix>& scores, std::span<const int> labels, int bins,
          CalibrationKey key) {
  const auto b = calibration_bins(scores, labels, bins, key);
  const auto n = static_cast<double>(scores.rows());
  double total = 0.0;
  for (const auto& bin : b) {
    total += static_cast<double>(bin.count) / n *
             (bin.score * std::max(bin.score - bin.accuracy, 0.0));
  }
  return total;
}

double emd_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("emd: both samples must be nonempty");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<double> all = sa;
  all.insert(all.end(), sb.begin(), sb.end());
  std::sort(all.begin(), all.end());

  const auto na = static_cast<double>(sa.size());
  const auto nb = static_cast<double>(sb.size());
  std::size_t ia = 0;
  std::size_t ib = 0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < all.size(); ++k) {
    while (ia < sa.size() && sa[ia] <= all[k]) ++ia;
    while (ib < sb.size() && sb[ib] <= all[k]) ++ib;
    const double width = all[k + 1] - all[k];
    if (width > 0.0) {
      total += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * width;
    }
  }
  return total;
}

double scott_bandwidth(std::span<const double> samples) {
  if (samples.empty()) throw InvalidArgument("kde: no samples");
  const auto n = static_cast<double>(samples.size());
  double sd = 0.0;
  if (samples.size() > 1) {
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : samples) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / (n - 1.0));
  }
  return std::max(sd * std::pow(n, -0.2), kMinBandwidth);
}

Vector kde_gaussian(std::span<const double> samples, std::span<const double> grid,
                    double bandwidth) {
  if (samples.empty()) throw InvalidArgument("kde: no samples");
  if (!(bandwidth > 0.0)) throw InvalidArgument("kde: bandwidth must be > 0");
  const double norm =
      1.0 / (static_cast<double>(samples.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  Vector out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (double x : samples) {
      const double u = (grid[g] - x) / bandwidth;
      s += std::exp(-0.5 * u * u);
    }
    out(static_cast<Eigen::Index>(g)) = s * norm;
  }
  return out;
}

std::vector<double> kde_grid(std::span<const double> samples, double bandwidth, int min_points) {
  if (samples.empty()) throw InvalidArgument("kde: no samples");
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn - 6.0 * bandwidth;
  const double hi = *mx + 6.0 * bandwidth;
  const double wanted = std::ceil((hi - lo) / (bandwidth / 4.0)) + 1.0;
  const auto points = static_cast<std::size_t>(
      std::clamp(wanted, static_cast<double>(std::max(min_points, 2)), 200001.0));
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return grid;
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("trapezoid: length mismatch");
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += (x[i] - x[i - 1]) * (y[i] + y[i - 1]) / 2.0;
  return s;
}

EvalReport evaluate_attack(const AttackModel& attack, std::span<const MembershipRecord> records) {
  EvalReport rep;
  rep.attack = attack.name();
  if (records.empty()) throw InvalidArgument("evaluate: no records");
  const Matrix scores = score_matrix(records);
  const auto preds = predict_membership_batch(attack, scores);

  std::vector<int> decisions;
  std::vector<int> truths;
  std::vector<double> raw;
  std::vector<double> member_max;
  std::vector<double> nonmember_max;
  double fp_sum = 0.0;
  double tn_sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double m = scores.row(static_cast<Eigen::Index>(i)).maxCoeff();
    decisions.push_back(preds[i].decision);
    truths.push_back(records[i].is_member ? 1 : 0);
    raw.push_back(preds[i].raw_score);
    if (records[i].is_member) {
      member_max.push_back(m);
    } else {
      nonmember_max.push_back(m);
      (preds[i].decision == 1 ? fp_sum : tn_sum) += m;
    }
  }
  rep.counts = confusion(decisions, truths);
  rep.precision = precision(rep.counts);
  rep.recall = recall(rep.counts);
  rep.fpr = fpr(rep.counts);
  rep.precision_degenerate = precision_degenerate(rep.counts);
  rep.fpr_degenerate = fpr_degenerate(rep.counts);
  if (rep.counts.fp > 0) rep.mmps_fp = fp_sum / static_cast<double>(rep.counts.fp);
  if (rep.counts.tn > 0) rep.mmps_tn = tn_sum / static_cast<double>(rep.counts.tn);
  if (!member_max.empty() && !nonmember_max.empty()) {
    const auto curve = roc_curve(raw, truths);
    rep.auroc = auroc(curve);
    rep.fpr_at_95tpr = fpr_at_tpr(curve, 0.95);
    rep.auprc = auprc(raw, truths);
    rep.emd_vs_members = emd_1d(member_max, nonmember_max);
  }
  return rep;
}

}  // namespace mia
