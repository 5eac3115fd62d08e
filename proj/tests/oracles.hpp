#pragma once

// Reference implementations used by the tests. Each one is written the most
// direct way possible (pair loops, explicit enumeration) and shares no code
// with the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "mia/nn.hpp"

namespace oracle {

// P(member score > nonmember score) + 0.5 P(tie), by looping over all pairs.
inline double auroc_pairs(const std::vector<double>& s, const std::vector<int>& t) {
  long twice = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (t[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (t[j] != 0) continue;
      ++pairs;
      if (s[i] > s[j]) twice += 2;
      else if (s[i] == s[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

// Average precision by enumerating every observed score as a threshold
// (predict positive iff score >= threshold), highest threshold first.
inline double auprc_enumerate(const std::vector<double>& s, const std::vector<int>& t) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  long pos = 0;
  for (int v : t) pos += v;
  double area = 0.0;
  double prev_recall = 0.0;
  for (double thr : thresholds) {
    long tp = 0;
    long fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= thr) (t[i] == 1 ? tp : fp) += 1;
    }
    const double r = static_cast<double>(tp) / static_cast<double>(pos);
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (r - prev_recall) * p;
    prev_recall = r;
  }
  return area;
}

struct Calibration {
  double ece = 0.0;
  double oe = 0.0;
};

// ECE/OE straight from the formula: every bin is scanned over all samples.
inline Calibration calibration_direct(const Eigen::MatrixXd& scores, const std::vector<int>& labels,
                                      int bins, bool max_confidence) {
  const auto n = static_cast<double>(scores.rows());
  Calibration c;
  for (int b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / bins;
    const double hi = static_cast<double>(b + 1) / bins;
    long count = 0;
    long correct = 0;
    double sum = 0.0;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      Eigen::Index pred = 0;
      for (Eigen::Index k = 1; k < scores.cols(); ++k) {
        if (scores(r, k) > scores(r, pred)) pred = k;
      }
      const double key = max_confidence ? scores(r, pred) : scores(r, labels[static_cast<std::size_t>(r)]);
      const bool last = b == bins - 1;
      const bool inside = key >= lo && (key < hi || (last && key <= 1.0));
      if (!inside) continue;
      ++count;
      sum += key;
      if (pred == labels[static_cast<std::size_t>(r)]) ++correct;
    }
    if (count == 0) continue;
    const double acc = static_cast<double>(correct) / static_cast<double>(count);
    const double score = sum / static_cast<double>(count);
    c.ece += static_cast<double>(count) / n * std::abs(acc - score);
    c.oe += static_cast<double>(count) / n * score * std::max(score - acc, 0.0);
  }
  return c;
}

// Equal-size Wasserstein-1: mean absolute difference of sorted samples.
inline double emd_sorted(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// Youden J of the rule "member iff value >= thr", by direct counting.
inline double youden(const std::vector<double>& v, const std::vector<int>& t, double thr) {
  long tp = 0;
  long fp = 0;
  long pos = 0;
  long neg = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (t[i] == 1) {
      ++pos;
      if (v[i] >= thr) ++tp;
    } else {
      ++neg;
      if (v[i] >= thr) ++fp;
    }
  }
  return static_cast<double>(tp) / static_cast<double>(pos) -
         static_cast<double>(fp) / static_cast<double>(neg);
}

// Best Youden J over every observed value as a threshold plus +infinity.
// Any threshold between two observed values selects the same set as the
// next observed value above it, so this covers every achievable split.
inline double best_youden(const std::vector<double>& v, const std::vector<int>& t) {
  double best = youden(v, t, std::numeric_limits<double>::infinity());
  for (double thr : v) best = std::max(best, youden(v, t, thr));
  return best;
}

inline double relu_like(double z, mia::Activation act, double slope) {
  if (z > 0.0) return z;
  return act == mia::Activation::kLeakyRelu ? slope * z : 0.0;
}

// Forward pass written out with scalar loops.
inline Eigen::MatrixXd forward_loops(const mia::Network& net, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), net.config.output_dim());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> a(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) a[static_cast<std::size_t>(j)] = x(r, j);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const auto& layer = net.layers[l];
      std::vector<double> z(static_cast<std::size_t>(layer.weight.rows()));
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
        double s = layer.bias(i);
        for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) s += layer.weight(i, j) * a[static_cast<std::size_t>(j)];
        z[static_cast<std::size_t>(i)] = l + 1 < net.layers.size()
                                             ? relu_like(s, net.config.activation, net.config.slope)
                                             : s;
      }
      a = std::move(z);
    }
    for (std::size_t k = 0; k < a.size(); ++k) out(r, static_cast<Eigen::Index>(k)) = a[k];
  }
  return out;
}

// Preactivations of every hidden unit for one input, for kink detection.
inline std::vector<double> hidden_preactivations(const mia::Network& net, const Eigen::RowVectorXd& x) {
  std::vector<double> pre;
  Eigen::VectorXd a = x.transpose();
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    const Eigen::VectorXd z = net.layers[l].weight * a + net.layers[l].bias;
    for (Eigen::Index i = 0; i < z.size(); ++i) pre.push_back(z(i));
    a = z.unaryExpr([&](double v) { return relu_like(v, net.config.activation, net.config.slope); });
  }
  return pre;
}

}  // namespace oracle
