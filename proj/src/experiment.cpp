#include "mia/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "mia/rng.hpp"
#include "mia/serialize.hpp"

namespace mia {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string ScenarioSpec::name() const {
  switch (kind) {
    case ScenarioKind::kStandard: return "standard";
    case ScenarioKind::kLabelSmoothing: return "label_smoothing";
    case ScenarioKind::kTemperature: return "temperature";
    case ScenarioKind::kL2: return "l2";
  }
  return "unknown";
}

const char* eval_kind_name(EvalKind kind) {
  switch (kind) {
    case EvalKind::kHeldOut: return "test";
    case EvalKind::kFake: return "fake";
    case EvalKind::kShifted: return "shifted";
    case EvalKind::kUniformNoise: return "noise";
    case EvalKind::kPermuted: return "permuted";
    case EvalKind::kScaled: return "scaled";
  }
  return "unknown";
}

namespace {

EvalKind parse_eval_kind(std::string_view s) {
  for (auto k : {EvalKind::kHeldOut, EvalKind::kFake, EvalKind::kShifted, EvalKind::kUniformNoise,
                 EvalKind::kPermuted, EvalKind::kScaled}) {
    if (s == eval_kind_name(k)) return k;
  }
  throw InvalidArgument("unknown evaluation dataset '" + std::string(s) + "'");
}

}  // namespace

ScenarioSpec parse_scenario(std::string_view text, const ScenarioDefaults& defaults) {
  std::string_view name = text;
  std::optional<double> value;
  if (const auto colon = text.find(':'); colon != std::string_view::npos) {
    name = text.substr(0, colon);
    value = parse_double(text.substr(colon + 1));
  }
  ScenarioSpec s;
  if (name == "standard") {
    s.kind = ScenarioKind::kStandard;
  } else if (name == "label_smoothing" || name == "ls") {
    s = {ScenarioKind::kLabelSmoothing, value.value_or(defaults.label_smoothing)};
  } else if (name == "temperature" || name == "temp") {
    s = {ScenarioKind::kTemperature, value.value_or(defaults.temperature)};
  } else if (name == "l2") {
    s = {ScenarioKind::kL2, value.value_or(defaults.l2)};
  } else {
    throw InvalidArgument("unknown scenario '" + std::string(text) +
                          "' (expected standard, label_smoothing, temperature or l2)");
  }
  return s;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.network.hidden_dims = {64, 64};
  c.network.activation = Activation::kLeakyRelu;
  c.network.slope = kDefaultLeakySlope;
  c.training.epochs = 8000;
  c.training.batch_size = 16;
  c.training.optimizer = AdamSpec{0.01, 0.9, 0.999, 1e-8};
  return c;
}

void ExperimentConfig::validate() const {
  if (data.num_classes < 2) throw InvalidArgument("data.num_classes must be >= 2");
  if (data.dim < 2) throw InvalidArgument("data.dim must be >= 2");
  if (!(data.std > 0.0)) throw InvalidArgument("data.std must be > 0");
  if (data.pool_size < 8) throw InvalidArgument("data.pool_size too small");
  NetworkConfig nc = network;
  nc.input_dim = data.dim;
  nc.num_classes = data.num_classes;
  nc.validate();
  if (network.hidden_dims.empty()) throw InvalidArgument("network.hidden_dims must be non-empty");
  training.validate();
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
  switch (scenario.kind) {
    case ScenarioKind::kLabelSmoothing:
      if (!(scenario.value >= 0.0 && scenario.value < 1.0)) {
        throw InvalidArgument("label_smoothing scenario: alpha must lie in [0, 1)");
      }
      break;
    case ScenarioKind::kTemperature:
      if (!(scenario.value > 0.0)) throw InvalidArgument("temperature scenario: T must be > 0");
      break;
    case ScenarioKind::kL2:
      if (!(scenario.value >= 0.0)) throw InvalidArgument("l2 scenario: lambda must be >= 0");
      break;
    case ScenarioKind::kStandard: break;
  }
  if (evaluation.subset_size <= 0) throw InvalidArgument("evaluation.subset_size must be > 0");
  if (evaluation.ece_bins <= 0) throw InvalidArgument("evaluation.ece_bins must be > 0");
  if (!(evaluation.scaled_delta > 0.0)) throw InvalidArgument("evaluation.scaled_delta must be > 0");
  if (evaluation.datasets.empty()) throw InvalidArgument("evaluation.datasets must be non-empty");
  if (sweep.samples <= 0) throw InvalidArgument("sweep.samples must be > 0");
  for (std::size_t i = 0; i < sweep.deltas.size(); ++i) {
    if (!(sweep.deltas[i] > 0.0)) throw InvalidArgument("sweep.deltas must be positive");
    if (i > 0 && !(sweep.deltas[i] > sweep.deltas[i - 1])) {
      throw InvalidArgument("sweep.deltas must be ascending");
    }
  }
  if (attack.max_epochs < 0 || attack.batch_size <= 0 || attack.hidden <= 0 ||
      !(attack.lr > 0.0) || attack.patience <= 0) {
    throw InvalidArgument("attack: invalid top-3 training settings");
  }
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

int line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

class ConfigReader {
 public:
  ConfigReader(const std::string& text, const nlohmann::json& obj, std::string prefix)
      : text_(text), obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) fail(prefix_.empty() ? "<root>" : prefix_, "expected an object");
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      keys_.insert(it.key());
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const std::string leaf = key.substr(key.rfind('.') + 1);
    const int line = line_of_key(text_, leaf);
    throw InvalidArgument("config key '" + key + "'" +
                          (line > 0 ? " (line " + std::to_string(line) + ")" : "") + ": " + msg);
  }

  std::string full(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const nlohmann::json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const auto* v = get(key)) {
      if (!v->is_number()) fail(full(key), "expected a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const auto* v = get(key)) {
      if (!v->is_number_integer()) fail(full(key), "expected an integer");
      if (v->is_number_unsigned()) {
        out = static_cast<Int>(v->get<std::uint64_t>());
      } else {
        const auto x = v->get<std::int64_t>();
        if constexpr (std::is_unsigned_v<Int>) {
          if (x < 0) fail(full(key), "expected a nonnegative integer");
        }
        out = static_cast<Int>(x);
      }
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const auto* v = get(key)) {
      if (!v->is_string()) fail(full(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const auto* v = get(key)) {
      if (!v->is_array()) fail(full(key), "expected an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(full(key), "expected an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }

  void integers(const std::string& key, std::vector<int>& out) {
    if (const auto* v = get(key)) {
      if (!v->is_array()) fail(full(key), "expected an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) fail(full(key), "expected an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }

  void strings(const std::string& key, std::vector<std::string>& out) {
    if (const auto* v = get(key)) {
      if (!v->is_array()) fail(full(key), "expected an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) fail(full(key), "expected an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }

  std::optional<ConfigReader> object(const std::string& key) {
    if (const auto* v = get(key)) {
      if (!v->is_object()) fail(full(key), "expected an object");
      return ConfigReader(text_, *v, full(key));
    }
    return std::nullopt;
  }

  void finish() const {
    for (const auto& k : keys_) {
      if (!seen_.contains(k)) fail(full(k), "unknown key");
    }
  }

  template <typename F>
  void guard(const std::string& key, F&& f) const {
    try {
      f();
    } catch (const InvalidArgument& e) {
      fail(full(key), e.what());
    }
  }

 private:
  const std::string& text_;
  const nlohmann::json& obj_;
  std::string prefix_;
  std::set<std::string> keys_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto pos = std::min<std::size_t>(e.byte, text.size());
    const int line =
        1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
    throw InvalidArgument("config: JSON syntax error near line " + std::to_string(line) + ": " +
                          e.what());
  }

  ExperimentConfig c = default_config();
  ConfigReader root(text, doc, "");
  root.integer("seed", c.seed);

  if (auto s = root.object("scenarios")) {
    s->number("label_smoothing", c.scenarios.label_smoothing);
    s->number("temperature", c.scenarios.temperature);
    s->number("l2", c.scenarios.l2);
    s->finish();
  }
  std::string scenario = "standard";
  root.string("scenario", scenario);
  root.guard("scenario", [&] { c.scenario = parse_scenario(scenario, c.scenarios); });

  if (auto d = root.object("data")) {
    d->integer("num_classes", c.data.num_classes);
    d->integer("dim", c.data.dim);
    d->number("radius", c.data.radius);
    d->number("std", c.data.std);
    d->integer("pool_size", c.data.pool_size);
    std::vector<double> fr(c.data.fractions.begin(), c.data.fractions.end());
    d->numbers("fractions", fr);
    if (fr.size() != 4) d->fail(d->full("fractions"), "expected 4 fractions");
    std::copy(fr.begin(), fr.end(), c.data.fractions.begin());
    d->finish();
  }

  if (auto n = root.object("network")) {
    n->integers("hidden_dims", c.network.hidden_dims);
    std::string act = c.network.activation == Activation::kRelu ? "relu" : "leaky_relu";
    n->string("activation", act);
    if (act == "relu") {
      c.network.activation = Activation::kRelu;
    } else if (act == "leaky_relu") {
      c.network.activation = Activation::kLeakyRelu;
    } else {
      n->fail(n->full("activation"), "expected relu or leaky_relu");
    }
    n->number("slope", c.network.slope);
    n->finish();
  }

  if (auto t = root.object("training")) {
    t->integer("epochs", c.training.epochs);
    t->integer("batch_size", c.training.batch_size);
    std::string opt = std::holds_alternative<AdamSpec>(c.training.optimizer) ? "adam" : "sgd";
    t->string("optimizer", opt);
    AdamSpec adam = std::holds_alternative<AdamSpec>(c.training.optimizer)
                        ? std::get<AdamSpec>(c.training.optimizer)
                        : AdamSpec{};
    double lr = adam.lr;
    t->number("lr", lr);
    t->number("beta1", adam.beta1);
    t->number("beta2", adam.beta2);
    t->number("eps", adam.eps);
    if (opt == "adam") {
      adam.lr = lr;
      c.training.optimizer = adam;
    } else if (opt == "sgd") {
      c.training.optimizer = SgdSpec{lr};
    } else {
      t->fail(t->full("optimizer"), "expected adam or sgd");
    }
    t->number("label_smoothing", c.training.label_smoothing);
    t->number("l2", c.training.l2);
    t->finish();
  }

  root.number("temperature", c.temperature);

  if (auto a = root.object("attack")) {
    a->integer("hidden", c.attack.hidden);
    a->number("lr", c.attack.lr);
    a->integer("batch_size", c.attack.batch_size);
    a->integer("patience", c.attack.patience);
    a->number("min_delta", c.attack.min_delta);
    a->integer("max_epochs", c.attack.max_epochs);
    a->number("cutoff", c.attack.cutoff);
    a->finish();
  }

  if (auto e = root.object("evaluation")) {
    e->integer("subset_size", c.evaluation.subset_size);
    e->integer("ece_bins", c.evaluation.ece_bins);
    std::string key = c.evaluation.ece_key == CalibrationKey::kTrueClassScore ? "true_class" : "max_confidence";
    e->string("ece_binning", key);
    if (key == "true_class") {
      c.evaluation.ece_key = CalibrationKey::kTrueClassScore;
    } else if (key == "max_confidence") {
      c.evaluation.ece_key = CalibrationKey::kMaxConfidence;
    } else {
      e->fail(e->full("ece_binning"), "expected true_class or max_confidence");
    }
    e->number("shift", c.evaluation.shift);
    e->number("scaled_delta", c.evaluation.scaled_delta);
    std::vector<std::string> names;
    e->strings("datasets", names);
    if (!names.empty()) {
      c.evaluation.datasets.clear();
      for (const auto& nm : names) {
        e->guard("datasets", [&] { c.evaluation.datasets.push_back(parse_eval_kind(nm)); });
      }
    }
    e->finish();
  }

  if (auto s = root.object("sweep")) {
    s->numbers("deltas", c.sweep.deltas);
    s->integer("samples", c.sweep.samples);
    s->finish();
  }

  root.string("output", c.output);
  root.finish();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scenario"] = c.scenario.kind == ScenarioKind::kStandard
                      ? c.scenario.name()
                      : c.scenario.name() + ":" + format_double(c.scenario.value);
  j["scenarios"] = {{"label_smoothing", c.scenarios.label_smoothing},
                    {"temperature", c.scenarios.temperature},
                    {"l2", c.scenarios.l2}};
  j["data"] = {{"num_classes", c.data.num_classes},
               {"dim", c.data.dim},
               {"radius", c.data.radius},
               {"std", c.data.std},
               {"pool_size", c.data.pool_size},
               {"fractions", c.data.fractions}};
  j["network"] = {{"hidden_dims", c.network.hidden_dims},
                  {"activation", c.network.activation == Activation::kRelu ? "relu" : "leaky_relu"},
                  {"slope", c.network.slope}};
  json t;
  t["epochs"] = c.training.epochs;
  t["batch_size"] = c.training.batch_size;
  if (const auto* adam = std::get_if<AdamSpec>(&c.training.optimizer)) {
    t["optimizer"] = "adam";
    t["lr"] = adam->lr;
    t["beta1"] = adam->beta1;
    t["beta2"] = adam->beta2;
    t["eps"] = adam->eps;
  } else {
    t["optimizer"] = "sgd";
    t["lr"] = std::get<SgdSpec>(c.training.optimizer).lr;
  }
  t["label_smoothing"] = c.training.label_smoothing;
  t["l2"] = c.training.l2;
  j["training"] = t;
  j["temperature"] = c.temperature;
  j["attack"] = {{"hidden", c.attack.hidden},         {"lr", c.attack.lr},
                 {"batch_size", c.attack.batch_size}, {"patience", c.attack.patience},
                 {"min_delta", c.attack.min_delta},   {"max_epochs", c.attack.max_epochs},
                 {"cutoff", c.attack.cutoff}};
  std::vector<std::string> names;
  for (auto k : c.evaluation.datasets) names.emplace_back(eval_kind_name(k));
  j["evaluation"] = {
      {"subset_size", c.evaluation.subset_size},
      {"ece_bins", c.evaluation.ece_bins},
      {"ece_binning",
       c.evaluation.ece_key == CalibrationKey::kTrueClassScore ? "true_class" : "max_confidence"},
      {"shift", c.evaluation.shift},
      {"scaled_delta", c.evaluation.scaled_delta},
      {"datasets", names}};
  j["sweep"] = {{"deltas", c.sweep.deltas}, {"samples", c.sweep.samples}};
  j["output"] = c.output;
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

PreparationConfig preparation_config(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparationConfig p;
  p.data = MixtureSpec::circle(cfg.data.num_classes, cfg.data.dim, cfg.data.radius, cfg.data.std);
  p.pool_size = cfg.data.pool_size;
  p.fractions = cfg.data.fractions;
  p.network = cfg.network;
  p.network.input_dim = cfg.data.dim;
  p.network.num_classes = cfg.data.num_classes;
  p.network.head = OutputHead::kSoftmax;
  p.training = cfg.training;
  p.temperature = cfg.temperature;
  p.seed = cfg.seed;
  switch (cfg.scenario.kind) {
    case ScenarioKind::kLabelSmoothing: p.training.label_smoothing = cfg.scenario.value; break;
    case ScenarioKind::kTemperature: p.temperature = cfg.scenario.value; break;
    case ScenarioKind::kL2: p.training.l2 = cfg.scenario.value; break;
    case ScenarioKind::kStandard: break;
  }
  return p;
}

namespace {

LabeledDataset take_first(const LabeledDataset& ds, Eigen::Index n, std::uint64_t seed,
                          const char* what) {
  if (ds.size() < n) {
    throw InvalidArgument(std::string("evaluation: ") + what + " has " + std::to_string(ds.size()) +
                          " samples, subset_size needs " + std::to_string(n));
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(ds.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(n));
  std::sort(idx.begin(), idx.end());
  return select_rows(ds, idx);
}

}  // namespace

std::vector<std::pair<std::string, LabeledDataset>> build_eval_datasets(
    const ExperimentConfig& cfg, const Preparation& prep) {
  const auto n = cfg.evaluation.subset_size;
  const auto pcfg = preparation_config(cfg);
  std::vector<std::pair<std::string, LabeledDataset>> out;
  const LabeledDataset test =
      take_first(prep[Split::kTargetTest], n, stage_seed(cfg.seed, Stage::kEvalSubset, 1),
                 "target test split");
  for (EvalKind kind : cfg.evaluation.datasets) {
    const std::uint64_t seed =
        stage_seed(cfg.seed, Stage::kEvalData, static_cast<std::uint64_t>(kind) + 1);
    LabeledDataset ds;
    switch (kind) {
      case EvalKind::kHeldOut: ds = test; break;
      case EvalKind::kFake:
        ds = normalize(make_fake(prep.raw_splits[Split::kTargetTrain], n, seed), prep.stats);
        break;
      case EvalKind::kShifted: {
        const LabeledDataset fresh = generate_mixture(pcfg.data, n, seed);
        ds = normalize(make_shifted(fresh, RowVector::Constant(fresh.dim(), cfg.evaluation.shift)),
                       prep.stats);
        break;
      }
      case EvalKind::kUniformNoise: {
        const auto& train = prep[Split::kTargetTrain].features;
        ds = make_uniform_noise(train.colwise().minCoeff(), train.colwise().maxCoeff(), n,
                                cfg.data.num_classes, seed);
        break;
      }
      case EvalKind::kPermuted: ds = make_permuted(test, seed); break;
      case EvalKind::kScaled: ds = make_scaled(test, cfg.evaluation.scaled_delta); break;
    }
    out.emplace_back(eval_kind_name(kind), std::move(ds));
  }
  return out;
}

std::vector<AttackModel> fit_attacks(const ExperimentConfig& cfg, const Records& training) {
  std::vector<AttackModel> attacks;
  attacks.push_back({fit_entropy_threshold(training)});
  attacks.push_back({fit_max_score_threshold(training)});
  attacks.push_back({fit_top3(training, stage_seed(cfg.seed, Stage::kAttack), cfg.attack)});
  return attacks;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Preparation prep = run_preparation(preparation_config(cfg));
  auto attacks = fit_attacks(cfg, prep.attack_training);
  return evaluate_prepared(cfg, std::move(prep), std::move(attacks));
}

ExperimentResult evaluate_prepared(const ExperimentConfig& cfg, Preparation prep,
                                   std::vector<AttackModel> attacks) {
  ExperimentResult r;
  r.config = cfg;
  const PreparationConfig pcfg = preparation_config(cfg);
  r.prep = std::move(prep);
  r.attacks = std::move(attacks);

  const auto& target = r.prep.target;
  const double T = pcfg.temperature;
  r.members = take_first(r.prep[Split::kTargetTrain], cfg.evaluation.subset_size,
                         stage_seed(cfg.seed, Stage::kEvalSubset, 2), "target train split");
  const Records member_records = collect_records(target, r.members, true, T, "target_train");

  for (auto& [name, ds] : build_eval_datasets(cfg, r.prep)) {
    EvalSet set{name, ds, member_records};
    const Records non = collect_records(target, ds, false, T, name);
    set.records.insert(set.records.end(), non.begin(), non.end());
    r.eval_sets.push_back(std::move(set));
  }

  const Matrix test_scores = predict_scores(target, r.prep[Split::kTargetTest].features, T);
  r.model.target_train_accuracy = accuracy(target, r.prep[Split::kTargetTrain]);
  r.model.target_test_accuracy = accuracy(target, r.prep[Split::kTargetTest]);
  r.model.shadow_train_accuracy = accuracy(r.prep.shadow, r.prep[Split::kShadowTrain]);
  r.model.shadow_test_accuracy = accuracy(r.prep.shadow, r.prep[Split::kShadowTest]);
  r.model.ece = ece(test_scores, r.prep[Split::kTargetTest].labels, cfg.evaluation.ece_bins,
                    cfg.evaluation.ece_key);
  r.model.oe = oe(test_scores, r.prep[Split::kTargetTest].labels, cfg.evaluation.ece_bins,
                  cfg.evaluation.ece_key);

  for (const auto& attack : r.attacks) {
    for (const auto& set : r.eval_sets) {
      EvalReport rep = evaluate_attack(attack, set.records);
      rep.dataset = set.name;
      rep.ece = r.model.ece;
      rep.oe = r.model.oe;
      r.reports.push_back(std::move(rep));
    }
  }
  return r;
}

LabeledDataset sweep_nonmembers(const ExperimentConfig& cfg, const NormStats& stats) {
  const auto pcfg = preparation_config(cfg);
  return normalize(generate_mixture(pcfg.data, cfg.sweep.samples,
                                    stage_seed(cfg.seed, Stage::kEvalData, 100)),
                   stats);
}

// ---------------------------------------------------------------------------
// Serialization of results

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json report_to_json(const EvalReport& r) {
  json j;
  j["attack"] = r.attack;
  j["dataset"] = r.dataset;
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["tn"] = r.counts.tn;
  j["fn"] = r.counts.fn;
  j["precision"] = num(r.precision);
  j["recall"] = num(r.recall);
  j["fpr"] = num(r.fpr);
  j["precision_degenerate"] = r.precision_degenerate;
  j["fpr_degenerate"] = r.fpr_degenerate;
  j["auroc"] = num(r.auroc);
  j["auprc"] = num(r.auprc);
  j["fpr_at_95tpr"] = num(r.fpr_at_95tpr);
  j["mmps_fp"] = num(r.mmps_fp);
  j["mmps_tn"] = num(r.mmps_tn);
  j["ece"] = num(r.ece);
  j["oe"] = num(r.oe);
  j["emd_vs_members"] = num(r.emd_vs_members);
  return j;
}

namespace {

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{
      "attack", "dataset", "tp", "fp", "tn", "fn", "precision", "recall", "fpr",
      "precision_degenerate", "fpr_degenerate", "auroc", "auprc", "fpr_at_95tpr", "mmps_fp",
      "mmps_tn", "ece", "oe", "emd_vs_members"};
  return cols;
}

std::string cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_number_float()) return format_double(v.get<double>());
  return v.dump();
}

}  // namespace

std::string report_csv_header() {
  std::string s;
  for (const auto& c : report_columns()) s += (s.empty() ? "" : ",") + c;
  return s + "\n";
}

std::string report_csv_row(const EvalReport& rep) {
  const json j = report_to_json(rep);
  std::string s;
  bool first = true;
  for (const auto& c : report_columns()) {
    s += (first ? "" : ",") + cell(j[c]);
    first = false;
  }
  return s + "\n";
}

json result_to_json(const ExperimentResult& r) {
  json j;
  j["toolkit_version"] = kToolkitVersion;
  j["config_hash"] = config_hash(r.config);
  j["seed"] = r.config.seed;
  j["scenario"] = r.config.scenario.name();
  j["scenario_value"] = r.config.scenario.value;
  j["model"] = {{"target_train_accuracy", r.model.target_train_accuracy},
                {"target_test_accuracy", r.model.target_test_accuracy},
                {"shadow_train_accuracy", r.model.shadow_train_accuracy},
                {"shadow_test_accuracy", r.model.shadow_test_accuracy},
                {"ece", r.model.ece},
                {"oe", r.model.oe}};
  json attacks = json::array();
  for (const auto& a : r.attacks) {
    json aj;
    aj["attack"] = a.name();
    if (const auto* t = std::get_if<ThresholdAttack>(&a.model)) {
      aj["tau"] = num(t->tau);
    } else {
      aj["cutoff"] = std::get<Top3Attack>(a.model).cutoff;
    }
    attacks.push_back(aj);
  }
  j["attacks"] = attacks;
  json reps = json::array();
  for (const auto& rep : r.reports) reps.push_back(report_to_json(rep));
  j["reports"] = reps;
  return j;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "delta,mean_max_score,frac_member_entropy,frac_member_max,frac_member_top3\n";
  for (const auto& r : rows) {
    s += format_double(r.delta) + "," + format_double(r.mean_max_score);
    for (double f : r.member_fraction) s += "," + format_double(f);
    s += "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Records stage timings and artifacts; rewritten after every stage so a
// failed run leaves a manifest naming the failed stage.
class Manifest {
 public:
  Manifest(fs::path dir, const ExperimentConfig& cfg, std::string command,
           std::string file_name = "manifest.json")
      : dir_(std::move(dir)), file_name_(std::move(file_name)) {
    doc_["toolkit_version"] = kToolkitVersion;
    doc_["command"] = std::move(command);
    doc_["config_hash"] = config_hash(cfg);
    doc_["master_seed"] = cfg.seed;
    doc_["config"] = config_to_json(cfg);
    doc_["status"] = "running";
    doc_["stages"] = json::array();
  }

  template <typename F>
  void stage(const std::string& name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::string> artifacts;
    json entry;
    entry["name"] = name;
    try {
      body(artifacts);
    } catch (const std::exception& e) {
      entry["status"] = "failed";
      entry["error"] = e.what();
      entry["seconds"] = seconds_since(start);
      doc_["stages"].push_back(entry);
      doc_["status"] = "failed";
      doc_["failed_stage"] = name;
      write();
      throw;
    }
    entry["status"] = "ok";
    entry["seconds"] = seconds_since(start);
    entry["artifacts"] = artifacts;
    doc_["stages"].push_back(entry);
    write();
  }

  void finish() {
    doc_["status"] = "ok";
    write();
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
  }
  void write() const { write_text(dir_ / file_name_, doc_.dump(2) + "\n"); }

  fs::path dir_;
  std::string file_name_;
  json doc_;
};

void write_preparation_data(const fs::path& dir, const Preparation& prep,
                            std::vector<std::string>& artifacts) {
  static constexpr std::array<const char*, 4> kNames{"target_train", "target_test", "shadow_train",
                                                     "shadow_test"};
  fs::create_directories(dir / "datasets");
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string rel = std::string("datasets/") + kNames[i] + ".csv";
    save_csv(prep.splits[i], dir / rel);
    artifacts.push_back(rel);
  }
  save_stats(prep.stats, dir / "datasets/stats.csv");
  artifacts.emplace_back("datasets/stats.csv");
}

}  // namespace

void cmd_generate_data(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  Manifest manifest(out_dir, cfg, "generate-data");
  const PreparationConfig pcfg = preparation_config(cfg);
  manifest.stage("generate", [&](std::vector<std::string>& artifacts) {
    Preparation prep;
    const LabeledDataset pool =
        generate_mixture(pcfg.data, pcfg.pool_size, stage_seed(cfg.seed, Stage::kData));
    prep.raw_splits = split_disjoint(pool, pcfg.fractions, stage_seed(cfg.seed, Stage::kSplit));
    prep.stats = compute_stats(prep.raw_splits[Split::kTargetTrain]);
    for (std::size_t i = 0; i < 4; ++i) prep.splits[i] = normalize(prep.raw_splits.parts[i], prep.stats);
    write_preparation_data(out_dir, prep, artifacts);
    fs::create_directories(out_dir / "eval");
    for (const auto& [name, ds] : build_eval_datasets(cfg, prep)) {
      const std::string rel = "eval/" + name + ".csv";
      save_csv(ds, out_dir / rel);
      artifacts.push_back(rel);
    }
  });
  manifest.finish();
}

void cmd_run(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  Manifest manifest(out_dir, cfg, "run");
  manifest.stage("config", [&](std::vector<std::string>& artifacts) {
    write_text(out_dir / "config.json", config_to_json(cfg).dump(2) + "\n");
    artifacts.emplace_back("config.json");
  });

  ExperimentResult r;
  r.config = cfg;
  const PreparationConfig pcfg = preparation_config(cfg);
  manifest.stage("prepare", [&](std::vector<std::string>& artifacts) {
    r.prep = run_preparation(pcfg);
    write_preparation_data(out_dir, r.prep, artifacts);
    fs::create_directories(out_dir / "models");
    save_network(out_dir / "models/target.bin", r.prep.target);
    save_network(out_dir / "models/shadow.bin", r.prep.shadow);
    save_records(r.prep.attack_training, out_dir / "attack_training.csv");
    artifacts.insert(artifacts.end(),
                     {"models/target.bin", "models/shadow.bin", "attack_training.csv"});
  });
  manifest.stage("fit_attacks", [&](std::vector<std::string>& artifacts) {
    r.attacks = fit_attacks(cfg, r.prep.attack_training);
    fs::create_directories(out_dir / "attacks");
    for (const auto& a : r.attacks) {
      const std::string rel = std::string("attacks/") + a.name() + ".bin";
      save_attack(out_dir / rel, a);
      artifacts.push_back(rel);
    }
  });
  manifest.stage("evaluate", [&](std::vector<std::string>& artifacts) {
    // Evaluation is recomputed from the persisted models and attacks.
    Preparation prep = std::move(r.prep);
    prep.target = load_network(out_dir / "models/target.bin");
    std::vector<AttackModel> attacks;
    for (const auto& a : r.attacks) {
      attacks.push_back(load_attack(out_dir / (std::string("attacks/") + a.name() + ".bin")));
    }
    r = evaluate_prepared(cfg, std::move(prep), std::move(attacks));

    fs::create_directories(out_dir / "eval");
    save_csv(r.members, out_dir / "eval/members.csv");
    artifacts.emplace_back("eval/members.csv");
    for (const auto& set : r.eval_sets) {
      const std::string rel = "eval/" + set.name + ".csv";
      save_csv(set.nonmembers, out_dir / rel);
      artifacts.push_back(rel);
    }
    std::string summary = report_csv_header();
    for (const auto& rep : r.reports) {
      const std::string stem = "reports/" + rep.attack + "__" + rep.dataset;
      write_text(out_dir / (stem + ".json"), report_to_json(rep).dump(2) + "\n");
      write_text(out_dir / (stem + ".csv"), report_csv_header() + report_csv_row(rep));
      artifacts.push_back(stem + ".json");
      artifacts.push_back(stem + ".csv");
      summary += report_csv_row(rep);
    }
    write_text(out_dir / "summary.csv", summary);
    write_text(out_dir / "report.json", result_to_json(r).dump(2) + "\n");
    artifacts.insert(artifacts.end(), {"summary.csv", "report.json"});
  });
  manifest.finish();
}

void cmd_scaling_sweep(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  // Separate manifest name so sweeping inside a run directory keeps the run's manifest.
  Manifest manifest(out_dir, cfg, "scaling-sweep", "sweep_manifest.json");
  Network target;
  std::vector<AttackModel> attacks;
  NormStats stats;
  manifest.stage("models", [&](std::vector<std::string>& artifacts) {
    const bool have = fs::exists(out_dir / "models/target.bin") &&
                      fs::exists(out_dir / "datasets/stats.csv") &&
                      fs::exists(out_dir / "attacks/entropy.bin") &&
                      fs::exists(out_dir / "attacks/max_score.bin") &&
                      fs::exists(out_dir / "attacks/top3.bin");
    if (have) {
      target = load_network(out_dir / "models/target.bin");
      stats = load_stats(out_dir / "datasets/stats.csv");
      for (const char* n : {"entropy", "max_score", "top3"}) {
        attacks.push_back(load_attack(out_dir / (std::string("attacks/") + n + ".bin")));
      }
      artifacts.emplace_back("reused models/target.bin and attacks/*.bin");
      return;
    }
    const Preparation prep = run_preparation(preparation_config(cfg));
    target = prep.target;
    stats = prep.stats;
    attacks = fit_attacks(cfg, prep.attack_training);
    write_preparation_data(out_dir, prep, artifacts);
    fs::create_directories(out_dir / "models");
    fs::create_directories(out_dir / "attacks");
    save_network(out_dir / "models/target.bin", target);
    artifacts.emplace_back("models/target.bin");
    for (const auto& a : attacks) {
      const std::string rel = std::string("attacks/") + a.name() + ".bin";
      save_attack(out_dir / rel, a);
      artifacts.push_back(rel);
    }
  });
  manifest.stage("sweep", [&](std::vector<std::string>& artifacts) {
    const LabeledDataset non = sweep_nonmembers(cfg, stats);
    const double T = preparation_config(cfg).temperature;
    const auto rows = scaling_sweep(target, attacks, non, cfg.sweep.deltas, T);
    write_text(out_dir / "scaling_sweep.csv", sweep_csv(rows));
    artifacts.emplace_back("scaling_sweep.csv");
  });
  manifest.finish();
}

namespace {

struct LoadedRun {
  fs::path dir;
  ExperimentConfig config;
  json report;
  Network target;
  LabeledDataset members;
  std::vector<std::pair<std::string, LabeledDataset>> eval;
};

LoadedRun load_run(const fs::path& dir) {
  std::vector<std::string> missing;
  for (const char* f : {"config.json", "report.json", "models/target.bin", "eval/members.csv"}) {
    if (!fs::exists(dir / f)) missing.emplace_back(f);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw IoError("report: run directory " + dir.string() + " is missing: " + list);
  }
  LoadedRun run;
  run.dir = dir;
  run.config = load_config(dir / "config.json");
  run.report = json::parse(read_text(dir / "report.json"));
  run.target = load_network(dir / "models/target.bin");
  run.members = load_csv(dir / "eval/members.csv", run.config.data.num_classes);
  for (auto kind : run.config.evaluation.datasets) {
    const fs::path p = dir / "eval" / (std::string(eval_kind_name(kind)) + ".csv");
    if (!fs::exists(p)) {
      throw IoError("report: run directory " + dir.string() + " is missing: eval/" +
                    eval_kind_name(kind) + ".csv");
    }
    run.eval.emplace_back(eval_kind_name(kind), load_csv(p, run.config.data.num_classes));
  }
  return run;
}

std::vector<double> max_scores(const Network& net, const LabeledDataset& ds, double T) {
  const Matrix s = predict_scores(net, ds.features, T);
  std::vector<double> out(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index r = 0; r < s.rows(); ++r) out[static_cast<std::size_t>(r)] = s.row(r).maxCoeff();
  return out;
}

}  // namespace

void cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw InvalidArgument("report: at least one run directory required");
  std::vector<LoadedRun> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  fs::create_directories(out_dir / "kde");

  static const std::vector<std::string> kMetrics{"precision", "recall",  "fpr",
                                                 "auroc",     "auprc",   "fpr_at_95tpr",
                                                 "mmps_fp",   "mmps_tn", "emd_vs_members"};
  // scenario -> (attack, dataset) -> metric -> values over runs
  std::map<std::string, std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>>> agg;
  std::map<std::string, std::map<std::string, std::vector<double>>> model_agg;
  std::vector<std::string> scenario_order;
  std::string emd_csv = "run,scenario,seed,dataset,emd_vs_members\n";

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& run = runs[i];
    const std::string scen = run.report.at("scenario").get<std::string>();
    if (std::find(scenario_order.begin(), scenario_order.end(), scen) == scenario_order.end()) {
      scenario_order.push_back(scen);
    }
    for (const auto& rep : run.report.at("reports")) {
      auto& slot = agg[scen][{rep.at("attack").get<std::string>(), rep.at("dataset").get<std::string>()}];
      for (const auto& m : kMetrics) {
        if (!rep.at(m).is_null()) slot[m].push_back(rep.at(m).get<double>());
      }
    }
    for (const auto& [k, v] : run.report.at("model").items()) model_agg[scen][k].push_back(v.get<double>());

    // KDE and EMD recomputed from persisted artifacts.
    const double T = preparation_config(run.config).temperature;
    const std::string label = "run" + std::to_string(i) + "_" + scen + "_seed" +
                              std::to_string(run.config.seed);
    const auto member_max = max_scores(run.target, run.members, T);
    std::vector<std::pair<std::string, std::vector<double>>> sets{{"members", member_max}};
    for (const auto& [name, ds] : run.eval) sets.emplace_back(name, max_scores(run.target, ds, T));
    for (const auto& [name, values] : sets) {
      const double h = scott_bandwidth(values);
      const auto grid = kde_grid(values, h);
      const Vector dens = kde_gaussian(values, grid, h);
      std::string csv = "grid,density\n";
      for (std::size_t g = 0; g < grid.size(); ++g) {
        csv += format_double(grid[g]) + "," + format_double(dens(static_cast<Eigen::Index>(g))) + "\n";
      }
      write_text(out_dir / "kde" / (label + "__" + name + ".csv"), csv);
      if (name != "members") {
        emd_csv += label + "," + scen + "," + std::to_string(run.config.seed) + "," + name + "," +
                   format_double(emd_1d(member_max, values)) + "\n";
      }
    }
  }
  write_text(out_dir / "emd.csv", emd_csv);

  const std::string baseline =
      agg.contains("standard") ? std::string("standard") : scenario_order.front();
  const bool with_delta = scenario_order.size() > 1;
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  auto fmt = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); };

  std::string csv = "scenario,attack,dataset,runs";
  for (const auto& m : kMetrics) csv += "," + m;
  if (with_delta) {
    for (const auto& m : kMetrics) csv += ",delta_" + m;
  }
  csv += "\n";
  for (const auto& scen : scenario_order) {
    for (const auto& [key, metrics] : agg[scen]) {
      std::size_t n = 0;
      for (const auto& [m, v] : metrics) n = std::max(n, v.size());
      csv += scen + "," + key.first + "," + key.second + "," + std::to_string(n);
      for (const auto& m : kMetrics) {
        const auto it = metrics.find(m);
        csv += "," + fmt(it == metrics.end() ? kNaN : mean(it->second));
      }
      if (with_delta) {
        const auto& base = agg[baseline][key];
        for (const auto& m : kMetrics) {
          const auto it = metrics.find(m);
          const auto bt = base.find(m);
          const double d = (it == metrics.end() || bt == base.end())
                               ? kNaN
                               : mean(it->second) - mean(bt->second);
          csv += "," + fmt(d);
        }
      }
      csv += "\n";
    }
  }
  write_text(out_dir / "comparison.csv", csv);

  std::string models = "scenario,runs,target_train_accuracy,target_test_accuracy,ece,oe\n";
  for (const auto& scen : scenario_order) {
    auto& m = model_agg[scen];
    models += scen + "," + std::to_string(m["ece"].size()) + "," +
              fmt(mean(m["target_train_accuracy"])) + "," + fmt(mean(m["target_test_accuracy"])) +
              "," + fmt(mean(m["ece"])) + "," + fmt(mean(m["oe"])) + "\n";
  }
  write_text(out_dir / "models.csv", models);
}

}  // namespace mia
