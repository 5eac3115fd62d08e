#pragma once

// Dense (leaky-)ReLU classifiers with hand-written backprop.
//
// A network maps a batch X (n x input_dim, one sample per row) to logits
// (n x output_dim). Hidden layers apply relu or leaky_relu; the output layer
// is affine. Two heads are supported:
//   softmax: output_dim = num_classes, scores = softmax(z / T)
//   sigmoid: num_classes = 2, output_dim = 1, scores = [1 - s, s] with
//            s = sigmoid(z / T)
// With the sigmoid head, cross entropy over [1 - s, s] is binary cross
// entropy, so loss and gradient code is shared between heads.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "mia/types.hpp"

namespace mia {

enum class Activation : std::uint8_t { kRelu = 0, kLeakyRelu = 1 };
enum class OutputHead : std::uint8_t { kSoftmax = 0, kSigmoid = 1 };

inline constexpr double kDefaultLeakySlope = 0.01;
inline constexpr double kLogFloor = 1e-12;

struct NetworkConfig {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int num_classes = 2;
  Activation activation = Activation::kRelu;
  double slope = kDefaultLeakySlope;  // leaky_relu only
  OutputHead head = OutputHead::kSoftmax;

  [[nodiscard]] int output_dim() const {
    return head == OutputHead::kSigmoid ? 1 : num_classes;
  }
  void validate() const;

  bool operator==(const NetworkConfig&) const = default;
};

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct Network {
  NetworkConfig config;
  std::vector<Layer> layers;

  [[nodiscard]] std::size_t parameter_count() const;
};

bool operator==(const Network& a, const Network& b);

struct AdamSpec {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SgdSpec {
  double lr = 1e-2;
};

using OptimizerSpec = std::variant<AdamSpec, SgdSpec>;

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  OptimizerSpec optimizer = AdamSpec{};
  double label_smoothing = 0.0;  // alpha in [0, 1)
  double l2 = 0.0;               // lambda >= 0, weights only
  std::uint64_t seed = 42;

  void validate() const;
};

/// Same shapes as Network::layers.
struct Gradients {
  std::vector<Layer> layers;
};

struct OptimizerState {
  long step = 0;
  std::vector<Layer> first_moment;
  std::vector<Layer> second_moment;
};

struct EpochStats {
  double loss = 0.0;      // sample-weighted mean of minibatch objectives
  double accuracy = 0.0;  // argmax accuracy on the full training set after the epoch
};

/// He-style init: W ~ U(-a, a) with a = sqrt(2 / fan_in), zero biases.
Network init_network(const NetworkConfig& config, std::uint64_t seed);

inline double activate(double z, Activation act, double slope) {
  if (z > 0.0) return z;
  return act == Activation::kLeakyRelu ? slope * z : 0.0;
}

Matrix forward_logits(const Network& net, const Eigen::Ref<const Matrix>& batch);

/// Row-wise softmax of logits / temperature with max subtraction.
template <typename Derived>
Matrix softmax(const Eigen::MatrixBase<Derived>& logits, double temperature = 1.0) {
  if (!(temperature > 0.0)) throw InvalidArgument("softmax: temperature must be > 0");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    RowVector z = logits.row(r).template cast<double>() / temperature;
    z.array() -= z.maxCoeff();
    RowVector e = z.array().exp().matrix();
    out.row(r) = e / e.sum();
  }
  return out;
}

/// Scores from the network's head; one row per sample, `num_classes` columns.
Matrix logits_to_scores(const NetworkConfig& config, const Eigen::Ref<const Matrix>& logits,
                        double temperature);

Matrix predict_scores(const Network& net, const Eigen::Ref<const Matrix>& features,
                      double temperature = 1.0);

/// Smoothed targets (1 - alpha) * onehot + alpha / d.
Matrix smoothed_targets(std::span<const int> labels, int num_classes, double alpha);

/// Mean cross entropy of score rows against smoothed targets; log floored
/// at kLogFloor.
double cross_entropy_loss(const Eigen::Ref<const Matrix>& scores, std::span<const int> labels,
                          double alpha);

/// Training objective: cross entropy on the batch plus lambda * sum ||W||^2.
double objective(const Network& net, const Eigen::Ref<const Matrix>& batch,
                 std::span<const int> labels, const TrainConfig& cfg);

/// Gradient of objective() with respect to every weight and bias.
Gradients backward(const Network& net, const Eigen::Ref<const Matrix>& batch,
                   std::span<const int> labels, const TrainConfig& cfg);

/// One optimizer update. Adam uses bias-corrected moments; SGD is p -= lr * g.
void optimizer_step(Network& net, const Gradients& grads, OptimizerState& state,
                    const OptimizerSpec& spec);

/// Return false from the callback to stop after the current epoch.
using EpochCallback = std::function<bool(int epoch, const EpochStats&)>;

/// Minibatch training with a seeded shuffle each epoch (partial last batch
/// kept). Deterministic for a fixed seed.
std::vector<EpochStats> train(Network& net, const LabeledDataset& data, const TrainConfig& cfg,
                              const EpochCallback& on_epoch = {});

/// Argmax with ties broken by the lowest index.
int argmax(const Eigen::Ref<const RowVector>& row);

double accuracy(const Network& net, const LabeledDataset& data);

/// Per-layer activation patterns (1 where the preactivation is > 0) of the
/// hidden layers for a single input.
std::vector<std::vector<bool>> activation_pattern(const Network& net,
                                                  const Eigen::Ref<const RowVector>& x);

/// Local affine map of the network around x: logits(y) = A y + c for every y
/// sharing x's activation pattern.
struct AffineRegion {
  Matrix A;
  Vector c;
};
AffineRegion local_affine_map(const Network& net, const Eigen::Ref<const RowVector>& x);

}  // namespace mia
