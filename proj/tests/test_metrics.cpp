#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mia/metrics.hpp"
#include "oracles.hpp"

using namespace mia;

TEST_CASE("confusion counts and rates") {
  const std::vector<int> d{1, 1, 0, 0, 1, 0};
  const std::vector<int> t{1, 0, 0, 1, 1, 0};
  const ConfusionCounts c = confusion(d, t);
  CHECK(c == ConfusionCounts{2, 1, 2, 1});
  CHECK(precision(c) == doctest::Approx(2.0 / 3.0));
  CHECK(recall(c) == doctest::Approx(2.0 / 3.0));
  CHECK(fpr(c) == doctest::Approx(1.0 / 3.0));

  const ConfusionCounts none = confusion(std::vector<int>{0, 0}, std::vector<int>{1, 1});
  CHECK(precision(none) == 0.0);
  CHECK(precision_degenerate(none));
  CHECK(fpr_degenerate(none));
  CHECK_THROWS_AS(confusion(d, std::vector<int>{1}), InvalidArgument);
}

TEST_CASE("AUROC examples") {
  auto area = [](std::vector<double> s, std::vector<int> t) { return auroc(roc_curve(s, t)); };
  CHECK(area({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(area({0.9, 0.3, 0.5, 0.1}, {1, 1, 0, 0}) == 0.75);
  CHECK(area({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
  CHECK(area({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);

  const RocCurve c = roc_curve(std::vector<double>{0.9, 0.3, 0.5, 0.1}, std::vector<int>{1, 1, 0, 0});
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.front().tpr == 0.0);
  CHECK(c.points.back().fpr == 1.0);
  CHECK(c.points.back().tpr == 1.0);
  CHECK(fpr_at_tpr(c, 0.95) == 0.5);
  CHECK(fpr_at_tpr(c, 0.5) == 0.0);
  CHECK_THROWS_AS(roc_curve(std::vector<double>{0.1}, std::vector<int>{1}), InvalidArgument);
}

TEST_CASE("AUROC and AUPRC match enumeration oracles") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(2, 40);
  std::uniform_int_distribution<int> grid(0, 5);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    std::vector<double> s;
    std::vector<int> t;
    for (int i = 0; i < n; ++i) {
      t.push_back(i == 0 ? 1 : (i == 1 ? 0 : static_cast<int>(rng() % 2)));
      s.push_back(trial % 3 == 0 ? grid(rng) * 0.2 : n01(rng) + 0.5 * t.back());
    }
    CHECK(auroc(roc_curve(s, t)) == doctest::Approx(oracle::auroc_pairs(s, t)).epsilon(1e-12));
    CHECK(auprc(s, t) == doctest::Approx(oracle::auprc_enumerate(s, t)).epsilon(1e-12));
  }
}

TEST_CASE("AUPRC examples") {
  CHECK(auprc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  // Ranked: +, -, +, -  ->  (1/2)(1) + (1/2)(2/3)
  CHECK(auprc(std::vector<double>{0.9, 0.3, 0.5, 0.1}, std::vector<int>{1, 1, 0, 0}) ==
        doctest::Approx(0.5 + 1.0 / 3.0));
  // All tied: a single threshold with precision = prevalence.
  CHECK(auprc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 0, 0}) == 0.25);
  CHECK_THROWS_AS(auprc(std::vector<double>{0.5}, std::vector<int>{0}), InvalidArgument);
}

TEST_CASE("MMPS") {
  Matrix s(3, 2);
  s << 0.9, 0.1, 0.3, 0.7, 0.5, 0.5;
  CHECK(mmps(s) == doctest::Approx(0.7));
  CHECK_THROWS_AS(mmps(Matrix(0, 2)), InvalidArgument);
}

TEST_CASE("ECE and OE examples") {
  // Two samples in one bin with key 0.9, one right and one wrong.
  Matrix s(2, 2);
  s << 0.9, 0.1, 0.9, 0.1;
  const std::vector<int> y{0, 1};
  CHECK(ece(s, y, 15, CalibrationKey::kMaxConfidence) == doctest::Approx(0.4));
  CHECK(oe(s, y, 15, CalibrationKey::kMaxConfidence) == doctest::Approx(0.36));

  // Perfectly calibrated: key 1.0 falls in the last bin and is always right.
  Matrix sure(3, 3);
  sure << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const std::vector<int> ys{0, 1, 2};
  CHECK(ece(sure, ys) == 0.0);
  CHECK(oe(sure, ys) == 0.0);

  // Underconfident predictions contribute to ECE but not OE.
  Matrix under(2, 2);
  under << 0.6, 0.4, 0.6, 0.4;
  const std::vector<int> y0{0, 0};
  CHECK(ece(under, y0, 10, CalibrationKey::kMaxConfidence) == doctest::Approx(0.4));
  CHECK(oe(under, y0, 10, CalibrationKey::kMaxConfidence) == 0.0);

  const auto bins = calibration_bins(sure, ys, 4);
  CHECK(bins.size() == 4);
  CHECK(bins[3].count == 3);
  CHECK_THROWS_AS(ece(s, std::vector<int>{0}), InvalidArgument);
  CHECK_THROWS_AS(ece(s, y, 0), InvalidArgument);
}

TEST_CASE("ECE and OE match the direct formula") {
  std::mt19937_64 rng(5);
  std::gamma_distribution<double> g(0.7, 1.0);
  std::uniform_int_distribution<int> size(1, 80);
  std::uniform_int_distribution<int> classes(2, 6);
  std::uniform_int_distribution<int> bins(1, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    const int d = classes(rng);
    const int k = bins(rng);
    Matrix s(n, d);
    std::vector<int> y;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < d; ++c) s(r, c) = g(rng);
      s.row(r) /= s.row(r).sum();
      y.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(d)));
    }
    for (bool maxc : {false, true}) {
      const auto key = maxc ? CalibrationKey::kMaxConfidence : CalibrationKey::kTrueClassScore;
      const auto o = oracle::calibration_direct(s, y, k, maxc);
      CHECK(ece(s, y, k, key) == doctest::Approx(o.ece).epsilon(1e-12));
      CHECK(oe(s, y, k, key) == doctest::Approx(o.oe).epsilon(1e-12));
    }
  }
}

TEST_CASE("EMD examples and properties") {
  CHECK(emd_1d(std::vector<double>{0, 0}, std::vector<double>{1, 3}) == doctest::Approx(2.0));
  CHECK(emd_1d(std::vector<double>{0.5}, std::vector<double>{0.5}) == 0.0);
  // Unequal sizes: {0} vs {0, 1} moves half the mass by 1.
  CHECK(emd_1d(std::vector<double>{0}, std::vector<double>{0, 1}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(emd_1d(std::vector<double>{}, std::vector<double>{1}), InvalidArgument);

  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> c;
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(n01(rng));
      b.push_back(n01(rng) + 1.0);
      c.push_back(2.0 * n01(rng));
    }
    const double ab = emd_1d(a, b);
    CHECK(ab == doctest::Approx(oracle::emd_sorted(a, b)).epsilon(1e-12));
    CHECK(ab == doctest::Approx(emd_1d(b, a)).epsilon(1e-12));
    CHECK(ab <= emd_1d(a, c) + emd_1d(c, b) + 1e-12);
    std::vector<double> shifted = a;
    for (auto& v : shifted) v += 0.75;
    CHECK(emd_1d(a, shifted) == doctest::Approx(0.75).epsilon(1e-12));
  }
}

TEST_CASE("Gaussian KDE") {
  const std::vector<double> one{0.0};
  const double h = 0.3;
  const std::vector<double> at{0.0};
  CHECK(kde_gaussian(one, at, h)(0) == doctest::Approx(1.0 / (h * std::sqrt(2.0 * std::numbers::pi))));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  std::vector<double> samples;
  for (int i = 0; i < 300; ++i) samples.push_back(n01(rng));
  const double bw = scott_bandwidth(samples);
  CHECK(bw > 0.0);
  const auto grid = kde_grid(samples, bw);
  const Vector dens = kde_gaussian(samples, grid, bw);
  CHECK(trapezoid(grid, std::vector<double>(dens.data(), dens.data() + dens.size())) ==
        doctest::Approx(1.0).epsilon(0.01));

  const std::vector<double> sym{-1.0, 1.0};
  const std::vector<double> probe{-0.4, 0.4};
  const Vector ds = kde_gaussian(sym, probe, 0.5);
  CHECK(ds(0) == doctest::Approx(ds(1)).epsilon(1e-14));

  const std::vector<double> constant(10, 0.25);
  CHECK(scott_bandwidth(constant) == kMinBandwidth);
  const auto cg = kde_grid(constant, kMinBandwidth);
  const Vector cd = kde_gaussian(constant, cg, kMinBandwidth);
  CHECK(trapezoid(cg, std::vector<double>(cd.data(), cd.data() + cd.size())) ==
        doctest::Approx(1.0).epsilon(0.01));
  CHECK_THROWS_AS(kde_gaussian(one, at, 0.0), InvalidArgument);
}

TEST_CASE("evaluate_attack on separable records") {
  Records recs;
  for (int i = 0; i < 10; ++i) {
    RowVector s(2);
    const bool member = i < 5;
    const double m = member ? 0.95 - 0.01 * i : 0.55 + 0.01 * i;
    s << m, 1.0 - m;
    recs.push_back({s, member, member ? "members" : "test"});
  }
  const AttackModel attack{ThresholdAttack{AttackKind::kMaxScore, 0.8}};
  const EvalReport r = evaluate_attack(attack, recs);
  CHECK(r.counts == ConfusionCounts{5, 0, 5, 0});
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.fpr == 0.0);
  CHECK(r.auroc == 1.0);
  CHECK(r.auprc == 1.0);
  CHECK(r.fpr_at_95tpr == 0.0);
  CHECK(std::isnan(r.mmps_fp));
  CHECK(r.mmps_tn == doctest::Approx(0.55 + 0.01 * 7));
  CHECK(r.emd_vs_members > 0.2);
  CHECK(r.attack == "max_score");

  const AttackModel loose{ThresholdAttack{AttackKind::kMaxScore, 0.0}};
  const EvalReport all = evaluate_attack(loose, recs);
  CHECK(all.counts == ConfusionCounts{5, 5, 0, 0});
  CHECK(all.fpr == 1.0);
  CHECK(std::isnan(all.mmps_tn));
  CHECK(all.mmps_fp == doctest::Approx(0.55 + 0.01 * 7));
}
