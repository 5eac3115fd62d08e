#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "mia/data.hpp"

using namespace mia;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mia_test_data";
  fs::create_directories(dir);
  return dir / name;
}

int nearest_mean(const MixtureSpec& spec, const Eigen::Ref<const RowVector>& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < spec.num_classes(); ++c) {
    const double d = (x.transpose() - spec.means[static_cast<std::size_t>(c)]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("generate_mixture: shapes, determinism, n = 0") {
  const MixtureSpec spec = MixtureSpec::circle(4, 3, 2.0, 0.5);
  const LabeledDataset a = generate_mixture(spec, 100, 1);
  CHECK(a.size() == 100);
  CHECK(a.dim() == 3);
  CHECK(a.num_classes == 4);
  CHECK_NOTHROW(a.validate());
  const LabeledDataset b = generate_mixture(spec, 100, 1);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(generate_mixture(spec, 100, 2).features == a.features);

  const LabeledDataset empty = generate_mixture(spec, 0, 1);
  CHECK(empty.size() == 0);
  CHECK(empty.dim() == 3);
  CHECK(empty.labels.empty());

  // Circle layout: third coordinate zero, first two on the circle.
  for (const auto& m : spec.means) {
    CHECK(std::hypot(m(0), m(1)) == doctest::Approx(2.0));
    CHECK(m(2) == 0.0);
  }
}

TEST_CASE("generate_mixture: class means and separability") {
  MixtureSpec spec;
  spec.means = {Vector::Constant(2, -10.0), Vector::Constant(2, 10.0), Vector::Zero(2)};
  spec.means[2] << 10.0, -10.0;
  spec.stds = {1.0, 1.0, 1.0};
  const Eigen::Index n = 6000;
  const LabeledDataset ds = generate_mixture(spec, n, 33);
  long correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (nearest_mean(spec, ds.features.row(i)) == ds.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  CHECK(static_cast<double>(correct) / n >= 0.999);

  for (int c = 0; c < 3; ++c) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
      if (ds.labels[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
    }
    const RowVector mean = select_rows(ds, idx).features.colwise().mean();
    const double tol = 4.0 * 1.0 / std::sqrt(static_cast<double>(idx.size()));
    CHECK((mean.transpose() - spec.means[static_cast<std::size_t>(c)]).cwiseAbs().maxCoeff() <= tol);
  }
}

TEST_CASE("mixture validation") {
  MixtureSpec spec = MixtureSpec::circle(3, 2, 1.0, 1.0);
  spec.stds[1] = 0.0;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  CHECK_THROWS_AS(MixtureSpec::circle(3, 1, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(generate_mixture(MixtureSpec::circle(3, 2, 1.0, 1.0), -1, 0), InvalidArgument);
}

TEST_CASE("split_disjoint partitions the rows") {
  const LabeledDataset ds = generate_mixture(MixtureSpec::circle(3, 2, 1.0, 1.0), 200, 5);
  const DisjointSplits s = split_disjoint(ds, {0.2, 0.3, 0.2, 0.3}, 9);
  CHECK(s[Split::kTargetTrain].size() == 40);
  CHECK(s[Split::kTargetTest].size() == 60);
  CHECK(s[Split::kShadowTrain].size() == 40);
  CHECK(s[Split::kShadowTest].size() == 60);
  for (std::size_t p = 0; p < 4; ++p) {
    const auto& part = s.parts[p];
    for (Eigen::Index i = 0; i < part.size(); ++i) {
      const Eigen::Index src = s.indices[p][static_cast<std::size_t>(i)];
      CHECK(part.features.row(i) == ds.features.row(src));
      CHECK(part.labels[static_cast<std::size_t>(i)] == ds.labels[static_cast<std::size_t>(src)]);
    }
  }

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::uniform_int_distribution<Eigen::Index> size(40, 400);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<double, 4> f{u(rng), u(rng), u(rng), u(rng)};
    const double sum = f[0] + f[1] + f[2] + f[3];
    for (auto& v : f) v /= sum;
    f[3] = 1.0 - f[0] - f[1] - f[2];
    const Eigen::Index n = size(rng);
    LabeledDataset idx;
    idx.num_classes = 2;
    idx.features.resize(n, 1);
    idx.labels.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) idx.features(i, 0) = static_cast<double>(i);
    DisjointSplits sp;
    try {
      sp = split_disjoint(idx, f, rng());
    } catch (const InvalidArgument&) {
      continue;  // a split rounded to zero rows
    }
    std::vector<Eigen::Index> all;
    for (const auto& rows : sp.indices) all.insert(all.end(), rows.begin(), rows.end());
    std::sort(all.begin(), all.end());
    std::vector<Eigen::Index> expect(static_cast<std::size_t>(n));
    std::iota(expect.begin(), expect.end(), Eigen::Index{0});
    CHECK(all == expect);
  }
}

TEST_CASE("split_disjoint rejects bad fractions") {
  const LabeledDataset ds = generate_mixture(MixtureSpec::circle(3, 2, 1.0, 1.0), 20, 5);
  CHECK_THROWS_AS(split_disjoint(ds, {0.5, 0.5, 0.5, 0.5}, 1), InvalidArgument);
  CHECK_THROWS_AS(split_disjoint(ds, {1.0, 0.0, 0.0, 0.0}, 1), InvalidArgument);
  CHECK_THROWS_AS(split_disjoint(ds, {-0.1, 0.5, 0.3, 0.3}, 1), InvalidArgument);
}

TEST_CASE("normalize and denormalize") {
  LabeledDataset ds = generate_mixture(MixtureSpec::circle(3, 3, 5.0, 2.0), 500, 8);
  ds.features.col(2).setConstant(7.5);
  const NormStats st = compute_stats(ds);
  const LabeledDataset n = normalize(ds, st);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const auto col = n.features.col(j);
    CHECK(std::abs(col.mean()) < 1e-12);
    const double var = (col.array() - col.mean()).square().sum() / static_cast<double>(col.size());
    CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-12));
  }
  // A constant feature maps to 0 rather than NaN.
  CHECK(n.features.col(2).isZero(0.0));
  CHECK(st.std(2) == kStdFloor);

  const LabeledDataset back = denormalize(n, st);
  CHECK((back.features - ds.features).cwiseAbs().maxCoeff() < 1e-12);

  LabeledDataset empty;
  empty.features.resize(0, 3);
  CHECK_THROWS_AS(compute_stats(empty), InvalidArgument);
}

TEST_CASE("non-member transforms") {
  const LabeledDataset ds = generate_mixture(MixtureSpec::circle(3, 5, 2.0, 1.0), 50, 4);

  const LabeledDataset p = make_permuted(ds, 3);
  CHECK(p.labels == ds.labels);
  bool any_moved = false;
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    std::vector<double> a(ds.features.row(r).begin(), ds.features.row(r).end());
    std::vector<double> b(p.features.row(r).begin(), p.features.row(r).end());
    any_moved |= a != b;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK(any_moved);
  CHECK(make_permuted(ds, 3).features == p.features);

  const LabeledDataset sc = make_scaled(ds, 255.0);
  CHECK(sc.features == ds.features * 255.0);
  CHECK(make_scaled(ds, 1.0).features == ds.features);
  CHECK_THROWS_AS(make_scaled(ds, 0.0), InvalidArgument);

  const RowVector off = RowVector::Constant(5, 1.5);
  const LabeledDataset sh = make_shifted(ds, off);
  CHECK((sh.features.colwise().mean() - ds.features.colwise().mean() - off).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK_THROWS_AS(make_shifted(ds, RowVector::Zero(2)), InvalidArgument);

  const RowVector lo = RowVector::Constant(5, -2.0);
  const RowVector hi = RowVector::Constant(5, 3.0);
  const LabeledDataset noise = make_uniform_noise(lo, hi, 400, 3, 5);
  CHECK(noise.size() == 400);
  CHECK(noise.features.minCoeff() >= -2.0);
  CHECK(noise.features.maxCoeff() <= 3.0);
  CHECK_NOTHROW(noise.validate());
  CHECK_THROWS_AS(make_uniform_noise(hi, lo, 4, 3, 5), InvalidArgument);

  const LabeledDataset u = apply_transform(ds, UniformNoiseTransform{0.0, 1.0, 2});
  CHECK(u.size() == ds.size());
  CHECK(u.features.minCoeff() >= 0.0);
  CHECK(u.features.maxCoeff() <= 1.0);
  CHECK(apply_transform(ds, ScaleTransform{2.0}).features == ds.features * 2.0);
}

TEST_CASE("make_fake samples fitted per-class Gaussians") {
  const MixtureSpec spec = MixtureSpec::circle(3, 2, 6.0, 0.7);
  const LabeledDataset train = generate_mixture(spec, 600, 10);
  const LabeledDataset fake = make_fake(train, 6000, 11);
  CHECK(fake.size() == 6000);
  CHECK(make_fake(train, 0, 11).size() == 0);
  for (int c = 0; c < 3; ++c) {
    std::vector<Eigen::Index> ti;
    std::vector<Eigen::Index> fi;
    for (std::size_t i = 0; i < train.labels.size(); ++i) {
      if (train.labels[i] == c) ti.push_back(static_cast<Eigen::Index>(i));
    }
    for (std::size_t i = 0; i < fake.labels.size(); ++i) {
      if (fake.labels[i] == c) fi.push_back(static_cast<Eigen::Index>(i));
    }
    const RowVector tm = select_rows(train, ti).features.colwise().mean();
    const RowVector fm = select_rows(fake, fi).features.colwise().mean();
    CHECK((tm - fm).cwiseAbs().maxCoeff() <= 4.0 * 0.7 / std::sqrt(static_cast<double>(fi.size())));
    CHECK(static_cast<double>(fi.size()) / 6000.0 ==
          doctest::Approx(static_cast<double>(ti.size()) / 600.0).epsilon(0.15));
  }
  std::set<std::vector<double>> rows;
  for (Eigen::Index r = 0; r < train.size(); ++r) {
    rows.insert({train.features(r, 0), train.features(r, 1)});
  }
  for (Eigen::Index r = 0; r < fake.size(); ++r) {
    CHECK(rows.count({fake.features(r, 0), fake.features(r, 1)}) == 0);
  }

  LabeledDataset tiny = train;
  tiny.labels.assign(tiny.labels.size(), 0);
  tiny.labels[0] = 1;
  tiny.labels[1] = 1;
  CHECK_THROWS_AS(make_fake(tiny, 10, 1), InvalidArgument);  // class 2 is empty
}

TEST_CASE("CSV round trip and errors") {
  LabeledDataset ds = generate_mixture(MixtureSpec::circle(3, 2, 1.0, 1.0), 30, 2);
  ds.features(0, 0) = 1e-300;
  ds.features(1, 1) = -0.1;
  ds.features(2, 0) = 123456789.123456789;
  const fs::path p = scratch("round.csv");
  save_csv(ds, p);
  const LabeledDataset back = load_csv(p, 3);
  CHECK(back.labels == ds.labels);
  CHECK(back.features == ds.features);
  CHECK((back.features - ds.features).cwiseAbs().maxCoeff() <= 1e-12);

  {
    std::ofstream out(scratch("empty.csv"));
    out << "f0,f1,label\n";
  }
  const LabeledDataset empty = load_csv(scratch("empty.csv"));
  CHECK(empty.size() == 0);
  CHECK(empty.dim() == 2);

  {
    std::ofstream out(scratch("badlabel.csv"));
    out << "f0,f1,label\n0.5,0.25,1\n1.0,2.0,3\n";
  }
  try {
    load_csv(scratch("badlabel.csv"), 3);
    FAIL("expected an IoError");
  } catch (const IoError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("out of range") != std::string::npos);
  }
  {
    std::ofstream out(scratch("badnum.csv"));
    out << "f0,f1,label\n0.5,abc,1\n";
  }
  CHECK_THROWS_AS(load_csv(scratch("badnum.csv")), IoError);
  CHECK_THROWS_AS(load_csv(scratch("does_not_exist.csv")), IoError);
}

TEST_CASE("format_double round trips") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK_THROWS_AS(parse_double("1.5x"), InvalidArgument);
}

TEST_CASE("norm stats file round trip") {
  const LabeledDataset ds = generate_mixture(MixtureSpec::circle(3, 4, 1.0, 1.0), 50, 2);
  const NormStats st = compute_stats(ds);
  save_stats(st, scratch("stats.csv"));
  const NormStats back = load_stats(scratch("stats.csv"));
  CHECK(back.mean == st.mean);
  CHECK(back.std == st.std);
}
