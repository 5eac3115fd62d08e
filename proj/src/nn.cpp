#include "mia/nn.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mia/rng.hpp"

namespace mia {

void LabeledDataset::validate() const {
  if (num_classes < 2) throw InvalidArgument("dataset: num_classes must be >= 2");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw InvalidArgument("dataset: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(features.rows()) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw InvalidArgument("dataset: label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " outside [0, " + std::to_string(num_classes) +
                            ")");
    }
  }
  if (!features.allFinite()) throw InvalidArgument("dataset: non-finite feature value");
}

LabeledDataset select_rows(const LabeledDataset& ds, const std::vector<Eigen::Index>& indices) {
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), ds.dim());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(indices[i]);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(indices[i])]);
  }
  return out;
}

void NetworkConfig::validate() const {
  if (input_dim <= 0) throw InvalidArgument("network: input_dim must be positive");
  if (num_classes < 2) throw InvalidArgument("network: num_classes must be >= 2");
  if (head == OutputHead::kSigmoid && num_classes != 2) {
    throw InvalidArgument("network: sigmoid head requires num_classes == 2");
  }
  for (int h : hidden_dims) {
    if (h <= 0) throw InvalidArgument("network: hidden layer widths must be positive");
  }
  if (activation == Activation::kLeakyRelu && !(slope > 0.0 && slope < 1.0)) {
    throw InvalidArgument("network: leaky_relu slope must lie in (0, 1)");
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool operator==(const Network& a, const Network& b) {
  if (!(a.config == b.config) || a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& la = a.layers[i];
    const auto& lb = b.layers[i];
    if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols() ||
        la.bias.size() != lb.bias.size()) {
      return false;
    }
    if (la.weight != lb.weight || la.bias != lb.bias) return false;
  }
  return true;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("train: epochs must be >= 0");
  if (batch_size <= 0) throw InvalidArgument("train: batch_size must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw InvalidArgument("train: label_smoothing must lie in [0, 1)");
  }
  if (!(l2 >= 0.0)) throw InvalidArgument("train: l2 must be >= 0");
  const double lr = std::visit([](const auto& o) { return o.lr; }, optimizer);
  if (!(lr > 0.0)) throw InvalidArgument("train: learning rate must be > 0");
}

Network init_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Network net{config, {}};
  Rng rng(seed);
  int fan_in = config.input_dim;
  std::vector<int> widths = config.hidden_dims;
  widths.push_back(config.output_dim());
  for (int out : widths) {
    const double a = std::sqrt(2.0 / fan_in);
    std::uniform_real_distribution<double> dist(-a, a);
    Layer layer{Matrix(out, fan_in), Vector::Zero(out)};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    }
    net.layers.push_back(std::move(layer));
    fan_in = out;
  }
  return net;
}

namespace {

void check_batch(const Network& net, const Eigen::Ref<const Matrix>& batch) {
  if (batch.cols() != net.config.input_dim) {
    throw InvalidArgument("forward: batch has " + std::to_string(batch.cols()) +
                          " columns, network expects " + std::to_string(net.config.input_dim));
  }
}

void apply_activation(Matrix& z, const NetworkConfig& cfg) {
  if (cfg.activation == Activation::kRelu) {
    z = z.cwiseMax(0.0);
  } else {
    const double s = cfg.slope;
    z = z.unaryExpr([s](double v) { return v > 0.0 ? v : s * v; });
  }
}

// Preactivations of every layer for a batch; the last entry is the logits.
std::vector<Matrix> forward_all(const Network& net, const Eigen::Ref<const Matrix>& batch) {
  std::vector<Matrix> pre;
  pre.reserve(net.layers.size());
  Matrix h = batch;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    Matrix z = h * l.weight.transpose();
    z.rowwise() += l.bias.transpose();
    pre.push_back(z);
    if (i + 1 < net.layers.size()) {
      apply_activation(z, net.config);
      h = std::move(z);
    }
  }
  return pre;
}

void check_labels(std::span<const int> labels, int num_classes, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw InvalidArgument("labels: size does not match batch rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw InvalidArgument("labels: class index " + std::to_string(y) + " out of range");
    }
  }
}

double l2_penalty(const Network& net, double lambda) {
  if (lambda == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& l : net.layers) s += l.weight.squaredNorm();
  return lambda * s;
}

}  // namespace

Matrix forward_logits(const Network& net, const Eigen::Ref<const Matrix>& batch) {
  check_batch(net, batch);
  return forward_all(net, batch).back();
}

Matrix logits_to_scores(const NetworkConfig& config, const Eigen::Ref<const Matrix>& logits,
                        double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("scores: temperature must be > 0");
  if (config.head == OutputHead::kSoftmax) return softmax(logits, temperature);
  Matrix out(logits.rows(), 2);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double z = logits(r, 0) / temperature;
    // Evaluated on the side that avoids overflow in exp.
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    out(r, 0) = 1.0 - p;
    out(r, 1) = p;
  }
  return out;
}

Matrix predict_scores(const Network& net, const Eigen::Ref<const Matrix>& features,
                      double temperature) {
  return logits_to_scores(net.config, forward_logits(net, features), temperature);
}

Matrix smoothed_targets(std::span<const int> labels, int num_classes, double alpha) {
  Matrix t = Matrix::Constant(static_cast<Eigen::Index>(labels.size()), num_classes,
                              alpha / num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    t(static_cast<Eigen::Index>(i), labels[i]) += 1.0 - alpha;
  }
  return t;
}

double cross_entropy_loss(const Eigen::Ref<const Matrix>& scores, std::span<const int> labels,
                          double alpha) {
  check_labels(labels, static_cast<int>(scores.cols()), scores.rows());
  if (scores.rows() == 0) return 0.0;
  const Matrix targets = smoothed_targets(labels, static_cast<int>(scores.cols()), alpha);
  double total = 0.0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      const double t = targets(r, c);
      if (t != 0.0) total -= t * std::log(std::max(scores(r, c), kLogFloor));
    }
  }
  return total / static_cast<double>(scores.rows());
}

double objective(const Network& net, const Eigen::Ref<const Matrix>& batch,
                 std::span<const int> labels, const TrainConfig& cfg) {
  const Matrix scores = predict_scores(net, batch, 1.0);
  return cross_entropy_loss(scores, labels, cfg.label_smoothing) + l2_penalty(net, cfg.l2);
}

namespace {

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

LossAndGradients loss_and_gradients(const Network& net, const Eigen::Ref<const Matrix>& batch,
                                    std::span<const int> labels, const TrainConfig& cfg) {
  check_batch(net, batch);
  check_labels(labels, net.config.num_classes, batch.rows());
  const auto n = static_cast<double>(std::max<Eigen::Index>(batch.rows(), 1));
  const std::vector<Matrix> pre = forward_all(net, batch);
  const Matrix targets = smoothed_targets(labels, net.config.num_classes, cfg.label_smoothing);

  const Matrix scores = logits_to_scores(net.config, pre.back(), 1.0);
  LossAndGradients out;
  out.loss = cross_entropy_loss(scores, labels, cfg.label_smoothing) + l2_penalty(net, cfg.l2);

  // dL/dlogits
  Matrix delta;
  if (net.config.head == OutputHead::kSoftmax) {
    delta = (scores - targets) / n;
  } else {
    delta = (scores.col(1) - targets.col(1)) / n;
  }

  Gradients& g = out.grads;
  g.layers.resize(net.layers.size());
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    Matrix input;
    if (k == 0) {
      input = batch;
    } else {
      input = pre[k - 1];
      apply_activation(input, net.config);
    }
    g.layers[k].weight = delta.transpose() * input;
    g.layers[k].bias = delta.colwise().sum().transpose();
    if (cfg.l2 != 0.0) g.layers[k].weight += 2.0 * cfg.l2 * net.layers[k].weight;
    if (k > 0) {
      Matrix back = delta * net.layers[k].weight;
      const double s = net.config.activation == Activation::kLeakyRelu ? net.config.slope : 0.0;
      back.array() *= pre[k - 1].array().unaryExpr([s](double v) { return v > 0.0 ? 1.0 : s; });
      delta = std::move(back);
    }
  }
  return out;
}

}  // namespace

Gradients backward(const Network& net, const Eigen::Ref<const Matrix>& batch,
                   std::span<const int> labels, const TrainConfig& cfg) {
  return loss_and_gradients(net, batch, labels, cfg).grads;
}

void optimizer_step(Network& net, const Gradients& grads, OptimizerState& state,
                    const OptimizerSpec& spec) {
  if (grads.layers.size() != net.layers.size()) {
    throw InvalidArgument("optimizer: gradient layer count mismatch");
  }
  if (const auto* sgd = std::get_if<SgdSpec>(&spec)) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      net.layers[i].weight -= sgd->lr * grads.layers[i].weight;
      net.layers[i].bias -= sgd->lr * grads.layers[i].bias;
    }
    ++state.step;
    return;
  }
  const auto& adam = std::get<AdamSpec>(spec);
  if (state.first_moment.empty()) {
    for (const auto& l : net.layers) {
      Layer zero{Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())};
      state.first_moment.push_back(zero);
      state.second_moment.push_back(zero);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = adam.beta1 * m + (1.0 - adam.beta1) * g;
    v = adam.beta2 * v + (1.0 - adam.beta2) * g.cwiseAbs2();
    p.array() -= adam.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + adam.eps);
  };
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    update(net.layers[i].weight, grads.layers[i].weight, state.first_moment[i].weight,
           state.second_moment[i].weight);
    update(net.layers[i].bias, grads.layers[i].bias, state.first_moment[i].bias,
           state.second_moment[i].bias);
  }
}

std::vector<EpochStats> train(Network& net, const LabeledDataset& data, const TrainConfig& cfg,
                              const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw InvalidArgument("train: empty dataset");
  data.validate();
  if (data.num_classes != net.config.num_classes) {
    throw InvalidArgument("train: dataset class count does not match network");
  }
  check_batch(net, data.features);

  Rng rng(cfg.seed);
  OptimizerState state;
  std::vector<EpochStats> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  const auto n = static_cast<std::size_t>(data.size());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Matrix xb;
  Labels yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      xb.resize(static_cast<Eigen::Index>(end - start), data.dim());
      yb.resize(end - start);
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = data.features.row(order[i]);
        yb[i - start] = data.labels[static_cast<std::size_t>(order[i])];
      }
      auto step = loss_and_gradients(net, xb, yb, cfg);
      loss_sum += step.loss * static_cast<double>(end - start);
      optimizer_step(net, step.grads, state, cfg.optimizer);
    }
    EpochStats stats{loss_sum / static_cast<double>(n), accuracy(net, data)};
    history.push_back(stats);
    if (on_epoch && !on_epoch(epoch, stats)) break;
  }
  return history;
}

int argmax(const Eigen::Ref<const RowVector>& row) {
  int best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i) {
    if (row(i) > row(best)) best = static_cast<int>(i);
  }
  return best;
}

double accuracy(const Network& net, const LabeledDataset& data) {
  if (data.empty()) throw InvalidArgument("accuracy: empty dataset");
  const Matrix scores = predict_scores(net, data.features, 1.0);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    if (argmax(scores.row(r)) == data.labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

std::vector<std::vector<bool>> activation_pattern(const Network& net,
                                                  const Eigen::Ref<const RowVector>& x) {
  const Matrix batch = x;
  check_batch(net, batch);
  const auto pre = forward_all(net, batch);
  std::vector<std::vector<bool>> pattern;
  for (std::size_t k = 0; k + 1 < pre.size(); ++k) {
    std::vector<bool> p(static_cast<std::size_t>(pre[k].cols()));
    for (Eigen::Index j = 0; j < pre[k].cols(); ++j) p[static_cast<std::size_t>(j)] = pre[k](0, j) > 0.0;
    pattern.push_back(std::move(p));
  }
  return pattern;
}

AffineRegion local_affine_map(const Network& net, const Eigen::Ref<const RowVector>& x) {
  const auto pattern = activation_pattern(net, x);
  const double s = net.config.activation == Activation::kLeakyRelu ? net.config.slope : 0.0;
  Matrix A = Matrix::Identity(net.config.input_dim, net.config.input_dim);
  Vector c = Vector::Zero(net.config.input_dim);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    A = net.layers[k].weight * A;
    c = net.layers[k].weight * c + net.layers[k].bias;
    if (k + 1 < net.layers.size()) {
      for (std::size_t j = 0; j < pattern[k].size(); ++j) {
        if (!pattern[k][j]) {
          A.row(static_cast<Eigen::Index>(j)) *= s;
          c(static_cast<Eigen::Index>(j)) *= s;
        }
      }
    }
  }
  return {A, c};
}

}  // namespace mia
