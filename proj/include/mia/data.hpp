#pragma once

// Synthetic datasets: Gaussian-mixture member distribution, disjoint
// target/shadow splits, and the non-member constructions used to probe
// attacks (shifted, fitted-Gaussian fakes, uniform noise, per-sample
// feature permutations, scaled inputs).

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>

#include "mia/types.hpp"

namespace mia {

struct MixtureSpec {
  std::vector<Vector> means;    // one per class
  std::vector<double> stds;     // isotropic per class
  std::vector<double> weights;  // empty = uniform

  [[nodiscard]] int num_classes() const { return static_cast<int>(means.size()); }
  [[nodiscard]] int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  void validate() const;

  /// Class means evenly spaced on a circle of `radius` in the first two
  /// coordinates (remaining coordinates zero), shared std.
  static MixtureSpec circle(int num_classes, int dim, double radius, double std);
};

LabeledDataset generate_mixture(const MixtureSpec& spec, Eigen::Index n, std::uint64_t seed);

enum class Split : std::size_t { kTargetTrain = 0, kTargetTest = 1, kShadowTrain = 2, kShadowTest = 3 };

struct DisjointSplits {
  std::array<LabeledDataset, 4> parts;
  std::array<std::vector<Eigen::Index>, 4> indices;  // rows of the source dataset

  const LabeledDataset& operator[](Split s) const { return parts[static_cast<std::size_t>(s)]; }
  const std::vector<Eigen::Index>& rows(Split s) const {
    return indices[static_cast<std::size_t>(s)];
  }
};

/// Seeded shuffle, then contiguous blocks with boundaries round(cumsum(f) * n).
/// Throws if fractions do not sum to 1 (within 1e-9) or a split ends up empty.
DisjointSplits split_disjoint(const LabeledDataset& ds, const std::array<double, 4>& fractions,
                              std::uint64_t seed);

inline constexpr double kStdFloor = 1e-8;

struct NormStats {
  RowVector mean;
  RowVector std;  // floored at kStdFloor
};

NormStats compute_stats(const LabeledDataset& train);
LabeledDataset normalize(const LabeledDataset& ds, const NormStats& stats);
LabeledDataset denormalize(const LabeledDataset& ds, const NormStats& stats);

/// Every row gets its own seeded permutation of its feature values.
LabeledDataset make_permuted(const LabeledDataset& ds, std::uint64_t seed);
LabeledDataset make_scaled(const LabeledDataset& ds, double delta);
LabeledDataset make_shifted(const LabeledDataset& ds, const Eigen::Ref<const RowVector>& offset);

/// Uniform samples in the box [low, high] (per feature); labels uniform at
/// random since noise has no class.
LabeledDataset make_uniform_noise(const Eigen::Ref<const RowVector>& low,
                                  const Eigen::Ref<const RowVector>& high, Eigen::Index n,
                                  int num_classes, std::uint64_t seed);

/// Per-class diagonal Gaussian (maximum likelihood fit on `train`) sampled
/// afresh. Class counts follow the class frequencies of `train`.
LabeledDataset make_fake(const LabeledDataset& train, Eigen::Index n, std::uint64_t seed);

struct PermuteTransform {
  std::uint64_t seed = 0;
};
struct ScaleTransform {
  double delta = 1.0;
};
struct ShiftTransform {
  RowVector offset;
};
struct UniformNoiseTransform {
  double low = 0.0;
  double high = 1.0;
  std::uint64_t seed = 0;
};
using TransformSpec =
    std::variant<PermuteTransform, ScaleTransform, ShiftTransform, UniformNoiseTransform>;

/// Applies a transform to `ds`. Uniform noise keeps the row count and
/// replaces every feature with U(low, high).
LabeledDataset apply_transform(const LabeledDataset& ds, const TransformSpec& spec);

/// CSV with header `f0,...,f{m-1},label`. When `num_classes` is omitted it is
/// max(label) + 1 (at least 2).
LabeledDataset load_csv(const std::filesystem::path& path,
                        std::optional<int> num_classes = std::nullopt);
void save_csv(const LabeledDataset& ds, const std::filesystem::path& path);

void save_stats(const NormStats& stats, const std::filesystem::path& path);
NormStats load_stats(const std::filesystem::path& path);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

}  // namespace mia
