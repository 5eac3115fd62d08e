#include "mia/shadow.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "mia/rng.hpp"

namespace mia {

std::uint64_t stage_seed(std::uint64_t master, Stage stage, std::uint64_t sub) {
  const std::uint64_t s = derive_seed(master, static_cast<std::uint64_t>(stage));
  return sub == 0 ? s : derive_seed(s, sub);
}

Preparation run_preparation(const PreparationConfig& config) {
  config.network.validate();
  if (config.network.num_classes != config.data.num_classes()) {
    throw InvalidArgument("preparation: network num_classes does not match the data");
  }
  if (config.network.input_dim != config.data.dim()) {
    throw InvalidArgument("preparation: network input_dim does not match the data");
  }

  Preparation p;
  const LabeledDataset pool =
      generate_mixture(config.data, config.pool_size, stage_seed(config.seed, Stage::kData));
  p.raw_splits = split_disjoint(pool, config.fractions, stage_seed(config.seed, Stage::kSplit));
  p.stats = compute_stats(p.raw_splits[Split::kTargetTrain]);
  for (std::size_t i = 0; i < 4; ++i) p.splits[i] = normalize(p.raw_splits.parts[i], p.stats);

  p.train_config = config.training;
  p.train_config.seed = stage_seed(config.seed, Stage::kTrain);
  p.target = init_network(config.network, p.train_config.seed);
  p.shadow = init_network(config.network, p.train_config.seed);
  p.target_history = train(p.target, p[Split::kTargetTrain], p.train_config);
  p.shadow_history = train(p.shadow, p[Split::kShadowTrain], p.train_config);

  Records recs = collect_records(p.shadow, p[Split::kShadowTrain], true, config.temperature,
                                 "shadow_train");
  Records out = collect_records(p.shadow, p[Split::kShadowTest], false, config.temperature,
                                "shadow_test");
  recs.insert(recs.end(), out.begin(), out.end());
  p.attack_training = balance(recs, stage_seed(config.seed, Stage::kBalance));
  return p;
}

Records collect_records(const Network& model, const LabeledDataset& ds, bool is_member,
                        double temperature, const std::string& tag) {
  Records recs;
  if (ds.empty()) return recs;
  const Matrix scores = predict_scores(model, ds.features, temperature);
  recs.reserve(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    recs.push_back({scores.row(r), is_member, tag});
  }
  return recs;
}

Records balance(const Records& records, std::uint64_t seed) {
  std::vector<std::size_t> members;
  std::vector<std::size_t> nonmembers;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (records[i].is_member ? members : nonmembers).push_back(i);
  }
  if (members.empty() || nonmembers.empty()) {
    throw InvalidArgument("balance: records must contain members and non-members");
  }
  auto& larger = members.size() > nonmembers.size() ? members : nonmembers;
  const std::size_t keep = std::min(members.size(), nonmembers.size());
  if (larger.size() > keep) {
    Rng rng(seed);
    std::shuffle(larger.begin(), larger.end(), rng);
    larger.resize(keep);
  }
  std::vector<std::size_t> kept = members;
  kept.insert(kept.end(), nonmembers.begin(), nonmembers.end());
  std::sort(kept.begin(), kept.end());
  Records out;
  out.reserve(kept.size());
  for (auto i : kept) out.push_back(records[i]);
  return out;
}

Matrix score_matrix(std::span<const MembershipRecord> records) {
  if (records.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(records.size()), records.front().scores.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].scores.size() != m.cols()) {
      throw InvalidArgument("records: inconsistent score vector lengths");
    }
    m.row(static_cast<Eigen::Index>(i)) = records[i].scores;
  }
  return m;
}

void save_records(std::span<const MembershipRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("records: cannot open " + path.string() + " for writing");
  const Eigen::Index d = records.empty() ? 0 : records.front().scores.size();
  for (Eigen::Index j = 0; j < d; ++j) out << 's' << j << ',';
  out << "is_member,tag\n";
  for (const auto& r : records) {
    if (r.scores.size() != d) throw InvalidArgument("records: inconsistent score vector lengths");
    if (r.source_tag.find_first_of(",\n") != std::string::npos) {
      throw InvalidArgument("records: tag may not contain ',' or newline");
    }
    for (Eigen::Index j = 0; j < d; ++j) out << format_double(r.scores(j)) << ',';
    out << (r.is_member ? 1 : 0) << ',' << r.source_tag << '\n';
  }
  if (!out) throw IoError("records: write failed for " + path.string());
}

Records load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("records: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("records: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 3 || !line.ends_with("is_member,tag")) throw IoError("records: malformed header");
  const std::size_t d = cols - 2;
  Records recs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      cells.push_back(line.substr(start, pos - start));
    }
    cells.push_back(line.substr(start));
    if (cells.size() != cols) throw IoError("records: row " + std::to_string(row) + ": wrong cell count");
    MembershipRecord r;
    r.scores.resize(static_cast<Eigen::Index>(d));
    try {
      for (std::size_t j = 0; j < d; ++j) r.scores(static_cast<Eigen::Index>(j)) = parse_double(cells[j]);
    } catch (const InvalidArgument& e) {
      throw IoError("records: row " + std::to_string(row) + ": " + e.what());
    }
    if (cells[d] != "0" && cells[d] != "1") {
      throw IoError("records: row " + std::to_string(row) + ": is_member must be 0 or 1");
    }
    r.is_member = cells[d] == "1";
    r.source_tag = cells[d + 1];
    recs.push_back(std::move(r));
  }
  return recs;
}

}  // namespace mia
