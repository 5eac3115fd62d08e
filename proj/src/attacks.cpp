#include "mia/attacks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "mia/rng.hpp"
#include "mia/serialize.hpp"

namespace mia {

const char* attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kEntropy: return "entropy";
    case AttackKind::kMaxScore: return "max_score";
    case AttackKind::kTop3: return "top3";
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "entropy") return AttackKind::kEntropy;
  if (name == "max_score") return AttackKind::kMaxScore;
  if (name == "top3") return AttackKind::kTop3;
  throw InvalidArgument("unknown attack '" + std::string(name) + "'");
}

AttackKind AttackModel::kind() const {
  if (const auto* t = std::get_if<ThresholdAttack>(&model)) return t->statistic;
  return AttackKind::kTop3;
}

double entropy(const Eigen::Ref<const RowVector>& scores) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const double p = scores(i);
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

Eigen::RowVector3d top3_features(const Eigen::Ref<const RowVector>& scores) {
  std::vector<double> v(scores.data(), scores.data() + scores.size());
  const std::size_t k = std::min<std::size_t>(3, v.size());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(),
                    std::greater<>());
  Eigen::RowVector3d out = Eigen::RowVector3d::Zero();
  for (std::size_t i = 0; i < k; ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

namespace {

void require_both_classes(std::span<const MembershipRecord> records, const char* who) {
  bool member = false;
  bool nonmember = false;
  for (const auto& r : records) (r.is_member ? member : nonmember) = true;
  if (!member || !nonmember) {
    throw InvalidArgument(std::string(who) + ": records must contain members and non-members");
  }
}

std::vector<int> truths_of(std::span<const MembershipRecord> records) {
  std::vector<int> t;
  t.reserve(records.size());
  for (const auto& r : records) t.push_back(r.is_member ? 1 : 0);
  return t;
}

}  // namespace

ThresholdChoice best_upper_threshold(std::span<const double> values,
                                     std::span<const int> truths) {
  if (values.size() != truths.size()) throw InvalidArgument("threshold: length mismatch");
  const long pos = std::count(truths.begin(), truths.end(), 1);
  const long neg = static_cast<long>(truths.size()) - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("threshold: both classes required");

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  const double inf = std::numeric_limits<double>::infinity();
  auto j_of = [&](long tp, long fp) {
    return static_cast<double>(tp) / static_cast<double>(pos) -
           static_cast<double>(fp) / static_cast<double>(neg);
  };
  // Start from +inf (nobody is a member) and lower the threshold group by group.
  ThresholdChoice best{inf, 0.0, 0, 0};
  long tp = 0;
  long fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = values[order[i]];
    while (i < order.size() && values[order[i]] == v) {
      (truths[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    double threshold = -inf;
    if (i < order.size()) {
      const double below = values[order[i]];
      threshold = below + (v - below) / 2.0;
      if (!(threshold > below) || threshold > v) threshold = v;
    }
    const double j = j_of(tp, fp);
    if (j > best.youden) best = {threshold, j, tp, fp};
  }
  return best;
}

ThresholdAttack fit_max_score_threshold(std::span<const MembershipRecord> records) {
  require_both_classes(records, "fit_max_score_threshold");
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(r.scores.maxCoeff());
  const auto truths = truths_of(records);
  return {AttackKind::kMaxScore, best_upper_threshold(v, truths).threshold};
}

ThresholdAttack fit_entropy_threshold(std::span<const MembershipRecord> records) {
  require_both_classes(records, "fit_entropy_threshold");
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(-entropy(r.scores));
  const auto truths = truths_of(records);
  return {AttackKind::kEntropy, -best_upper_threshold(v, truths).threshold};
}

Top3Attack fit_top3(std::span<const MembershipRecord> records, std::uint64_t seed,
                    const Top3FitConfig& cfg) {
  require_both_classes(records, "fit_top3");
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.features.resize(static_cast<Eigen::Index>(records.size()), 3);
  for (std::size_t i = 0; i < records.size(); ++i) {
    ds.features.row(static_cast<Eigen::Index>(i)) = top3_features(records[i].scores);
  }
  ds.labels = truths_of(records);

  NetworkConfig nc;
  nc.input_dim = 3;
  nc.hidden_dims = {cfg.hidden};
  nc.num_classes = 2;
  nc.activation = Activation::kRelu;
  nc.head = OutputHead::kSigmoid;

  TrainConfig tc;
  tc.epochs = cfg.max_epochs;
  tc.batch_size = cfg.batch_size;
  tc.optimizer = AdamSpec{cfg.lr, 0.9, 0.999, 1e-8};
  tc.seed = derive_seed(seed, 2);

  Top3Attack attack{init_network(nc, derive_seed(seed, 1)), cfg.cutoff};
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  train(attack.net, ds, tc, [&](int, const EpochStats& s) {
    if (s.loss < best - cfg.min_delta) {
      best = s.loss;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      return false;
    }
    return true;
  });
  return attack;
}

MembershipPrediction predict_membership(const AttackModel& attack,
                                        const Eigen::Ref<const RowVector>& scores) {
  if (const auto* t = std::get_if<ThresholdAttack>(&attack.model)) {
    if (t->statistic == AttackKind::kEntropy) {
      const double h = entropy(scores);
      return {h <= t->tau ? 1 : 0, -h};
    }
    const double m = scores.maxCoeff();
    return {m >= t->tau ? 1 : 0, m};
  }
  const auto& top3 = std::get<Top3Attack>(attack.model);
  const Matrix x = top3_features(scores);
  const double p = predict_scores(top3.net, x, 1.0)(0, 1);
  return {p >= top3.cutoff ? 1 : 0, p};
}

std::vector<MembershipPrediction> predict_membership_batch(const AttackModel& attack,
                                                           const Eigen::Ref<const Matrix>& scores) {
  std::vector<MembershipPrediction> out;
  out.reserve(static_cast<std::size_t>(scores.rows()));
  if (const auto* top3 = std::get_if<Top3Attack>(&attack.model)) {
    Matrix x(scores.rows(), 3);
    for (Eigen::Index r = 0; r < scores.rows(); ++r) x.row(r) = top3_features(scores.row(r));
    const Matrix p = predict_scores(top3->net, x, 1.0);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      out.push_back({p(r, 1) >= top3->cutoff ? 1 : 0, p(r, 1)});
    }
    return out;
  }
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    out.push_back(predict_membership(attack, RowVector(scores.row(r))));
  }
  return out;
}

std::vector<SweepRow> scaling_sweep(const Network& net, std::span<const AttackModel> attacks,
                                    const LabeledDataset& nonmembers_normalized,
                                    std::span<const double> deltas, double temperature) {
  if (nonmembers_normalized.empty()) throw InvalidArgument("scaling_sweep: empty dataset");
  std::vector<SweepRow> rows;
  for (double delta : deltas) {
    const LabeledDataset scaled = make_scaled(nonmembers_normalized, delta);
    const Matrix scores = predict_scores(net, scaled.features, temperature);
    SweepRow row;
    row.delta = delta;
    row.mean_max_score = scores.rowwise().maxCoeff().mean();
    for (const auto& attack : attacks) {
      const auto preds = predict_membership_batch(attack, scores);
      long members = 0;
      for (const auto& p : preds) members += p.decision;
      row.member_fraction.push_back(static_cast<double>(members) /
                                    static_cast<double>(preds.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {
constexpr std::array<char, 4> kAttackMagic{'M', 'I', 'A', 'A'};
constexpr std::uint32_t kAttackFormatVersion = 1;
}  // namespace

void save_attack(const std::filesystem::path& path, const AttackModel& attack) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("attack: cannot open " + path.string() + " for writing");
  out.write(kAttackMagic.data(), kAttackMagic.size());
  binary::write_u32(out, kAttackFormatVersion);
  binary::write_u8(out, static_cast<std::uint8_t>(attack.kind()));
  if (const auto* t = std::get_if<ThresholdAttack>(&attack.model)) {
    binary::write_f64(out, t->tau);
    binary::write_f64(out, 0.0);
    binary::write_u8(out, 0);
  } else {
    const auto& top3 = std::get<Top3Attack>(attack.model);
    binary::write_f64(out, 0.0);
    binary::write_f64(out, top3.cutoff);
    binary::write_u8(out, 1);
    write_network(out, top3.net);
  }
  if (!out) throw IoError("attack: write failed for " + path.string());
}

AttackModel load_attack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("attack: cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kAttackMagic) throw IoError("attack: bad magic in " + path.string());
  if (binary::read_u32(in) != kAttackFormatVersion) throw IoError("attack: unsupported version");
  const auto kind = binary::read_u8(in);
  const double tau = binary::read_f64(in);
  const double cutoff = binary::read_f64(in);
  const auto has_net = binary::read_u8(in);
  if (kind > 2) throw IoError("attack: unknown kind code");
  if (static_cast<AttackKind>(kind) == AttackKind::kTop3) {
    if (has_net != 1) throw IoError("attack: top-3 attack without network");
    return {Top3Attack{read_network(in), cutoff}};
  }
  return {ThresholdAttack{static_cast<AttackKind>(kind), tau}};
}

}  // namespace mia
