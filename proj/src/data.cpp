#include "mia/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mia/rng.hpp"

namespace mia {

void MixtureSpec::validate() const {
  if (means.size() < 2) throw InvalidArgument("mixture: need at least 2 classes");
  if (stds.size() != means.size()) throw InvalidArgument("mixture: one std per class required");
  if (!weights.empty() && weights.size() != means.size()) {
    throw InvalidArgument("mixture: one weight per class required");
  }
  for (const auto& m : means) {
    if (m.size() != means[0].size() || m.size() == 0) {
      throw InvalidArgument("mixture: class means must share a positive dimension");
    }
  }
  for (double s : stds) {
    if (!(s > 0.0)) throw InvalidArgument("mixture: std must be > 0");
  }
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("mixture: weights must be >= 0");
  }
}

MixtureSpec MixtureSpec::circle(int num_classes, int dim, double radius, double std) {
  if (dim < 2) throw InvalidArgument("mixture: circle layout needs dim >= 2");
  MixtureSpec spec;
  for (int c = 0; c < num_classes; ++c) {
    Vector m = Vector::Zero(dim);
    const double angle = 2.0 * std::numbers::pi * c / num_classes;
    m(0) = radius * std::cos(angle);
    m(1) = radius * std::sin(angle);
    spec.means.push_back(m);
    spec.stds.push_back(std);
  }
  return spec;
}

LabeledDataset generate_mixture(const MixtureSpec& spec, Eigen::Index n, std::uint64_t seed) {
  spec.validate();
  if (n < 0) throw InvalidArgument("mixture: n must be >= 0");
  const int k = spec.num_classes();
  std::vector<double> w = spec.weights.empty() ? std::vector<double>(k, 1.0) : spec.weights;
  Rng rng(seed);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  std::normal_distribution<double> gauss(0.0, 1.0);

  LabeledDataset ds;
  ds.num_classes = k;
  ds.features.resize(n, spec.dim());
  ds.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = pick(rng);
    ds.labels[static_cast<std::size_t>(i)] = c;
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      ds.features(i, j) = spec.means[static_cast<std::size_t>(c)](j) +
                          spec.stds[static_cast<std::size_t>(c)] * gauss(rng);
    }
  }
  return ds;
}

DisjointSplits split_disjoint(const LabeledDataset& ds, const std::array<double, 4>& fractions,
                              std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw InvalidArgument("split: fractions must be >= 0");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("split: fractions must sum to 1");

  const auto n = static_cast<std::size_t>(ds.size());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  static constexpr std::array<const char*, 4> kNames{"target_train", "target_test",
                                                     "shadow_train", "shadow_test"};
  DisjointSplits out;
  double cum = 0.0;
  std::size_t begin = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    cum += fractions[s];
    const std::size_t end =
        s == 3 ? n : std::min(n, static_cast<std::size_t>(std::llround(cum * static_cast<double>(n))));
    if (end <= begin) {
      throw InvalidArgument(std::string("split: ") + kNames[s] + " would be empty (n = " +
                            std::to_string(n) + ")");
    }
    out.indices[s].assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                          order.begin() + static_cast<std::ptrdiff_t>(end));
    out.parts[s] = select_rows(ds, out.indices[s]);
    begin = end;
  }
  return out;
}

NormStats compute_stats(const LabeledDataset& train) {
  if (train.empty()) throw InvalidArgument("stats: empty training set");
  NormStats s;
  s.mean = train.features.colwise().mean();
  const Matrix centered = train.features.rowwise() - s.mean;
  s.std = (centered.colwise().squaredNorm() / static_cast<double>(train.size())).cwiseSqrt();
  s.std = s.std.cwiseMax(kStdFloor);
  return s;
}

LabeledDataset normalize(const LabeledDataset& ds, const NormStats& stats) {
  if (ds.dim() != stats.mean.size()) throw InvalidArgument("normalize: dimension mismatch");
  LabeledDataset out = ds;
  out.features = ((ds.features.rowwise() - stats.mean).array().rowwise() / stats.std.array())
                     .matrix();
  return out;
}

LabeledDataset denormalize(const LabeledDataset& ds, const NormStats& stats) {
  if (ds.dim() != stats.mean.size()) throw InvalidArgument("denormalize: dimension mismatch");
  LabeledDataset out = ds;
  out.features = (ds.features.array().rowwise() * stats.std.array()).matrix().rowwise() +
                 stats.mean;
  return out;
}

LabeledDataset make_permuted(const LabeledDataset& ds, std::uint64_t seed) {
  LabeledDataset out = ds;
  Rng rng(seed);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(ds.dim()));
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index c = 0; c < ds.dim(); ++c) {
      out.features(r, c) = ds.features(r, perm[static_cast<std::size_t>(c)]);
    }
  }
  return out;
}

LabeledDataset make_scaled(const LabeledDataset& ds, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("scale: delta must be > 0");
  LabeledDataset out = ds;
  out.features *= delta;
  return out;
}

LabeledDataset make_shifted(const LabeledDataset& ds, const Eigen::Ref<const RowVector>& offset) {
  if (offset.size() != ds.dim()) throw InvalidArgument("shift: offset dimension mismatch");
  LabeledDataset out = ds;
  out.features.rowwise() += offset;
  return out;
}

LabeledDataset make_uniform_noise(const Eigen::Ref<const RowVector>& low,
                                  const Eigen::Ref<const RowVector>& high, Eigen::Index n,
                                  int num_classes, std::uint64_t seed) {
  if (low.size() != high.size()) throw InvalidArgument("noise: bound dimension mismatch");
  if (!(low.array() < high.array()).all()) throw InvalidArgument("noise: need low < high");
  if (num_classes < 2) throw InvalidArgument("noise: num_classes must be >= 2");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, num_classes - 1);
  LabeledDataset out;
  out.num_classes = num_classes;
  out.features.resize(n, low.size());
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < low.size(); ++c) {
      out.features(r, c) = low(c) + (high(c) - low(c)) * unit(rng);
    }
    out.labels[static_cast<std::size_t>(r)] = label(rng);
  }
  return out;
}

LabeledDataset make_fake(const LabeledDataset& train, Eigen::Index n, std::uint64_t seed) {
  const int k = train.num_classes;
  std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < train.labels.size(); ++i) {
    rows[static_cast<std::size_t>(train.labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<RowVector> mean(static_cast<std::size_t>(k));
  std::vector<RowVector> std(static_cast<std::size_t>(k));
  std::vector<double> freq(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    const auto& idx = rows[static_cast<std::size_t>(c)];
    if (idx.size() < 2) {
      throw InvalidArgument("fake: class " + std::to_string(c) + " has fewer than 2 samples");
    }
    const Matrix x = select_rows(train, idx).features;
    mean[static_cast<std::size_t>(c)] = x.colwise().mean();
    const Matrix centered = x.rowwise() - mean[static_cast<std::size_t>(c)];
    std[static_cast<std::size_t>(c)] =
        (centered.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
    freq[static_cast<std::size_t>(c)] = static_cast<double>(idx.size());
  }

  Rng rng(seed);
  std::discrete_distribution<int> pick(freq.begin(), freq.end());
  std::normal_distribution<double> gauss(0.0, 1.0);
  LabeledDataset out;
  out.num_classes = k;
  out.features.resize(n, train.dim());
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const int c = pick(rng);
    out.labels[static_cast<std::size_t>(r)] = c;
    for (Eigen::Index j = 0; j < train.dim(); ++j) {
      out.features(r, j) =
          mean[static_cast<std::size_t>(c)](j) + std[static_cast<std::size_t>(c)](j) * gauss(rng);
    }
  }
  return out;
}

LabeledDataset apply_transform(const LabeledDataset& ds, const TransformSpec& spec) {
  return std::visit(
      [&](const auto& t) -> LabeledDataset {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, PermuteTransform>) {
          return make_permuted(ds, t.seed);
        } else if constexpr (std::is_same_v<T, ScaleTransform>) {
          return make_scaled(ds, t.delta);
        } else if constexpr (std::is_same_v<T, ShiftTransform>) {
          return make_shifted(ds, t.offset);
        } else {
          LabeledDataset out = make_uniform_noise(RowVector::Constant(ds.dim(), t.low),
                                                  RowVector::Constant(ds.dim(), t.high),
                                                  ds.size(), ds.num_classes, t.seed);
          out.labels = ds.labels;
          return out;
        }
      },
      spec);
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidArgument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

LabeledDataset load_csv(const std::filesystem::path& path, std::optional<int> num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("csv: " + path.string() + ": missing header");
  const auto header = split_commas(strip_cr(line));
  if (header.size() < 2 || header.back() != "label") {
    throw IoError("csv: " + path.string() + ": malformed header (expected f0,...,label)");
  }
  const std::size_t m = header.size() - 1;
  for (std::size_t j = 0; j < m; ++j) {
    if (header[j] != "f" + std::to_string(j)) {
      throw IoError("csv: " + path.string() + ": malformed header at column " +
                    std::to_string(j) + " (expected f" + std::to_string(j) + ")");
    }
  }

  std::vector<double> values;
  Labels labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    ++row;
    const auto cells = split_commas(text);
    const std::string where = path.string() + ": row " + std::to_string(row);
    if (cells.size() != m + 1) {
      throw IoError("csv: " + where + ": expected " + std::to_string(m + 1) + " cells, got " +
                    std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < m; ++j) {
      try {
        values.push_back(parse_double(cells[j]));
      } catch (const InvalidArgument& e) {
        throw IoError("csv: " + where + ", column f" + std::to_string(j) + ": " + e.what());
      }
    }
    int label = 0;
    const auto lab = cells[m];
    const auto res = std::from_chars(lab.data(), lab.data() + lab.size(), label);
    if (lab.empty() || res.ec != std::errc() || res.ptr != lab.data() + lab.size()) {
      throw IoError("csv: " + where + ": label '" + std::string(lab) + "' is not an integer");
    }
    if (label < 0 || (num_classes && label >= *num_classes)) {
      throw IoError("csv: " + where + ": label " + std::to_string(label) + " out of range");
    }
    labels.push_back(label);
  }

  LabeledDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(m));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = values[r * m + j];
    }
  }
  ds.labels = std::move(labels);
  if (num_classes) {
    ds.num_classes = *num_classes;
  } else {
    const int max_label =
        ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.num_classes = std::max(2, max_label + 1);
  }
  return ds;
}

void save_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("csv: cannot open " + path.string() + " for writing");
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << format_double(ds.features(r, j)) << ',';
    out << ds.labels[static_cast<std::size_t>(r)] << '\n';
  }
  if (!out) throw IoError("csv: write failed for " + path.string());
}

void save_stats(const NormStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("stats: cannot open " + path.string() + " for writing");
  out << "feature,mean,std\n";
  for (Eigen::Index j = 0; j < stats.mean.size(); ++j) {
    out << j << ',' << format_double(stats.mean(j)) << ',' << format_double(stats.std(j)) << '\n';
  }
}

NormStats load_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("stats: cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (strip_cr(line) != "feature,mean,std") throw IoError("stats: malformed header");
  std::vector<double> mean;
  std::vector<double> sd;
  while (std::getline(in, line)) {
    if (strip_cr(line).empty()) continue;
    const auto cells = split_commas(strip_cr(line));
    if (cells.size() != 3) throw IoError("stats: malformed row " + std::to_string(mean.size() + 1));
    mean.push_back(parse_double(cells[1]));
    sd.push_back(parse_double(cells[2]));
  }
  NormStats s;
  s.mean = Eigen::Map<const RowVector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.std = Eigen::Map<const RowVector>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  return s;
}

}  // namespace mia
