#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mia {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Labels = std::vector<int>;

/// Raised for malformed inputs: shape mismatches, out-of-range labels,
/// invalid configuration values.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for I/O and format failures while reading or writing artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feature matrix (one sample per row) with class labels.
struct LabeledDataset {
  Matrix features;
  Labels labels;
  int num_classes = 2;

  [[nodiscard]] Eigen::Index size() const { return features.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return features.cols(); }
  [[nodiscard]] bool empty() const { return features.rows() == 0; }

  /// Throws InvalidArgument when labels/features disagree or a label is
  /// outside [0, num_classes).
  void validate() const;
};

/// Rows of `ds` at `indices`, in the given order.
LabeledDataset select_rows(const LabeledDataset& ds,
                           const std::vector<Eigen::Index>& indices);

}  // namespace mia
