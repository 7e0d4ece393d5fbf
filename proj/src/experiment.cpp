#include "fedids/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "fedids/checkpoint.hpp"
#include "fedids/log.hpp"
#include "json.hpp"

namespace fedids {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// JSON -> config

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) bad(where, "unknown key '" + k + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    bad(where + "." + key, e.what());
  }
}

std::size_t get_count(const json& j, const char* key, std::size_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    bad(where + "." + key, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

FeatureVector parse_feature_vector(const json& j, const std::string& where) {
  if (j.is_number()) return FeatureVector::constant(j.get<double>());
  if (j.is_array()) {
    FeatureVector v;
    v.explicit_values = std::vector<double>();
    for (const auto& x : j) {
      if (!x.is_number()) bad(where, "array entries must be numbers");
      v.explicit_values->push_back(x.get<double>());
    }
    return v;
  }
  check_keys(j, where, {"fill", "ranges"});
  FeatureVector v;
  v.fill = get_or<double>(j, "fill", 0.0, where);
  if (j.contains("ranges")) {
    for (const auto& r : j.at("ranges")) {
      if (!r.is_array() || r.size() != 3) bad(where + ".ranges", "entries are [begin, end, value]");
      v.ranges.push_back({r[0].get<std::size_t>(), r[1].get<std::size_t>(), r[2].get<double>()});
    }
  }
  return v;
}

SynthClientSpec parse_synth(const json& j, const std::string& where) {
  check_keys(j, where, {"benign_rows", "attack_rows", "components", "attack_offset", "attack_scale"});
  SynthClientSpec s;
  s.benign_rows = get_count(j, "benign_rows", 0, where);
  s.attack_rows = get_count(j, "attack_rows", 0, where);
  s.attack_scale = get_or<double>(j, "attack_scale", 1.0, where);
  if (j.contains("attack_offset")) s.attack_offset = parse_feature_vector(j.at("attack_offset"), where + ".attack_offset");
  if (!j.contains("components") || !j.at("components").is_array()) bad(where, "needs a 'components' array");
  std::size_t i = 0;
  for (const auto& c : j.at("components")) {
    const std::string cw = where + ".components[" + std::to_string(i++) + "]";
    check_keys(c, cw, {"weight", "mean", "stddev", "covariance"});
    GaussianComponent g;
    g.weight = get_or<double>(c, "weight", 1.0, cw);
    if (c.contains("mean")) g.mean = parse_feature_vector(c.at("mean"), cw + ".mean");
    if (c.contains("stddev")) g.stddev = parse_feature_vector(c.at("stddev"), cw + ".stddev");
    if (c.contains("covariance")) {
      try {
        g.covariance = c.at("covariance").get<std::vector<std::vector<double>>>();
      } catch (const json::exception& e) {
        bad(cw + ".covariance", e.what());
      }
    }
    s.components.push_back(std::move(g));
  }
  return s;
}

DataSource parse_source(const json& j, const std::string& where) {
  check_keys(j, where, {"csv", "synth", "seed"});
  DataSource s;
  if (j.contains("csv")) s.csv = get_or<std::string>(j, "csv", "", where);
  if (j.contains("synth")) s.synth = parse_synth(j.at("synth"), where + ".synth");
  if (j.contains("seed")) s.seed = get_or<std::uint64_t>(j, "seed", 0, where);
  return s;
}

SplitSpec parse_split(const json& j, const std::string& where, std::uint64_t default_seed) {
  check_keys(j, where, {"ae_train_benign", "clf_train_benign", "clf_train_attack", "test_benign",
                        "test_attack", "seed"});
  SplitSpec s;
  s.ae_train_benign = get_count(j, "ae_train_benign", 0, where);
  s.clf_train_benign = get_count(j, "clf_train_benign", 0, where);
  s.clf_train_attack = get_count(j, "clf_train_attack", 0, where);
  s.test_benign = get_count(j, "test_benign", 0, where);
  s.test_attack = get_count(j, "test_attack", 0, where);
  s.seed = get_or<std::uint64_t>(j, "seed", default_seed, where);
  return s;
}

OptimizerConfig parse_optimizer(const json& j, OptimizerConfig base, const std::string& where) {
  check_keys(j, where, {"kind", "learning_rate", "decay", "beta1", "beta2", "epsilon"});
  if (j.contains("kind")) {
    const auto k = get_or<std::string>(j, "kind", "", where);
    if (k == "adam") base.kind = OptimizerKind::Adam;
    else if (k == "rmsprop") base.kind = OptimizerKind::RMSProp;
    else bad(where + ".kind", "expected 'adam' or 'rmsprop'");
  }
  base.learning_rate = get_or<double>(j, "learning_rate", base.learning_rate, where);
  base.decay = get_or<double>(j, "decay", base.decay, where);
  base.beta1 = get_or<double>(j, "beta1", base.beta1, where);
  base.beta2 = get_or<double>(j, "beta2", base.beta2, where);
  base.epsilon = get_or<double>(j, "epsilon", base.epsilon, where);
  return base;
}

json feature_vector_json(const FeatureVector& v) {
  if (v.explicit_values) return *v.explicit_values;
  if (v.ranges.empty()) return v.fill;
  json ranges = json::array();
  for (const auto& r : v.ranges) ranges.push_back({r.begin, r.end, r.value});
  return {{"fill", v.fill}, {"ranges", ranges}};
}

json source_json(const DataSource& s) {
  json j = json::object();
  if (s.csv) j["csv"] = s.csv->string();
  if (s.seed) j["seed"] = *s.seed;
  if (s.synth) {
    json comps = json::array();
    for (const auto& c : s.synth->components) {
      json cj{{"weight", c.weight}, {"mean", feature_vector_json(c.mean)},
              {"stddev", feature_vector_json(c.stddev)}};
      if (c.covariance) cj["covariance"] = *c.covariance;
      comps.push_back(cj);
    }
    j["synth"] = {{"benign_rows", s.synth->benign_rows},
                  {"attack_rows", s.synth->attack_rows},
                  {"components", comps},
                  {"attack_offset", feature_vector_json(s.synth->attack_offset)},
                  {"attack_scale", s.synth->attack_scale}};
  }
  return j;
}

json split_json(const SplitSpec& s) {
  return {{"ae_train_benign", s.ae_train_benign}, {"clf_train_benign", s.clf_train_benign},
          {"clf_train_attack", s.clf_train_attack}, {"test_benign", s.test_benign},
          {"test_attack", s.test_attack}, {"seed", s.seed}};
}

json optimizer_json(const OptimizerConfig& o) {
  return {{"kind", to_string(o.kind)}, {"learning_rate", o.learning_rate}, {"decay", o.decay},
          {"beta1", o.beta1}, {"beta2", o.beta2}, {"epsilon", o.epsilon}};
}

json metrics_json(const ClassMetrics& c) {
  json j{{"support", c.support}, {"confusion_row", c.confusion_row}, {"present", c.present}};
  if (c.present) {
    j["precision"] = c.precision;
    j["recall"] = c.recall;
    j["f1"] = c.f1;
    j["zero_division"] = c.zero_division;
  }
  return j;
}

json report_json(const ClassReport& r) {
  return {{"benign", metrics_json(r.benign)}, {"attack", metrics_json(r.attack)},
          {"accuracy", r.accuracy}, {"total", r.total}};
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config", {"schema_version", "name", "mode", "seed", "allow_single_client", "clients",
                           "test", "scaler", "strategy", "plan", "model", "baselines", "transport",
                           "output_dir", "checkpoint_every"});
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.schema_version = get_or<int>(j, "schema_version", 0, "config");
  c.name = get_or<std::string>(j, "name", "", "config");
  const auto mode = get_or<std::string>(j, "mode", "federated", "config");
  if (mode == "central") c.mode = ExperimentMode::Central;
  else if (mode == "federated") c.mode = ExperimentMode::Federated;
  else bad("config.mode", "expected 'central' or 'federated'");
  c.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
  c.allow_single_client = get_or<bool>(j, "allow_single_client", false, "config");
  const auto transport = get_or<std::string>(j, "transport", "inprocess", "config");
  if (transport == "inprocess") c.transport = TransportKind::InProcess;
  else if (transport == "socket") c.transport = TransportKind::Socket;
  else bad("config.transport", "expected 'inprocess' or 'socket'");
  c.output_dir = get_or<std::string>(j, "output_dir", "runs", "config");
  c.checkpoint_every = get_count(j, "checkpoint_every", 0, "config");

  if (j.contains("clients")) {
    if (!j.at("clients").is_array()) bad("config.clients", "expected an array");
    std::size_t i = 0;
    for (const auto& cj : j.at("clients")) {
      const std::string w = "config.clients[" + std::to_string(i++) + "]";
      check_keys(cj, w, {"name", "source", "split", "labeled"});
      ClientConfig cc;
      cc.name = get_or<std::string>(cj, "name", "", w);
      cc.labeled = get_or<bool>(cj, "labeled", true, w);
      if (!cj.contains("source")) bad(w, "missing 'source'");
      cc.source = parse_source(cj.at("source"), w + ".source");
      if (!cj.contains("split")) bad(w, "missing 'split'");
      cc.split = parse_split(cj.at("split"), w + ".split", derive_seed(c.seed, "split:" + cc.name));
      c.clients.push_back(std::move(cc));
    }
  }

  if (j.contains("test")) {
    const auto& tj = j.at("test");
    check_keys(tj, "config.test", {"from_clients", "extra"});
    c.test.from_clients = get_or<bool>(tj, "from_clients", true, "config.test");
    if (tj.contains("extra")) {
      std::size_t i = 0;
      for (const auto& ej : tj.at("extra")) {
        const std::string w = "config.test.extra[" + std::to_string(i++) + "]";
        check_keys(ej, w, {"name", "source", "split"});
        TestSourceConfig t;
        t.name = get_or<std::string>(ej, "name", "", w);
        if (!ej.contains("source")) bad(w, "missing 'source'");
        t.source = parse_source(ej.at("source"), w + ".source");
        if (ej.contains("split")) t.split = parse_split(ej.at("split"), w + ".split", derive_seed(c.seed, "split:" + t.name));
        c.test.extra.push_back(std::move(t));
      }
    }
  }

  if (j.contains("scaler")) {
    const auto& sj = j.at("scaler");
    check_keys(sj, "config.scaler", {"scope", "init", "low", "high", "clamp"});
    const auto scope = get_or<std::string>(sj, "scope", "global", "config.scaler");
    if (scope == "global") c.scaler_scope = ScalerScope::Global;
    else if (scope == "individual") c.scaler_scope = ScalerScope::Individual;
    else bad("config.scaler.scope", "expected 'global' or 'individual'");
    const auto init = get_or<std::string>(sj, "init", "sentinel", "config.scaler");
    if (init == "sentinel") c.scaler_init.mode = ScalerInit::Sentinel;
    else if (init == "random") c.scaler_init.mode = ScalerInit::Random;
    else bad("config.scaler.init", "expected 'sentinel' or 'random'");
    c.scaler_init.low = get_or<double>(sj, "low", c.scaler_init.low, "config.scaler");
    c.scaler_init.high = get_or<double>(sj, "high", c.scaler_init.high, "config.scaler");
    c.model.clamp_scaled = get_or<bool>(sj, "clamp", false, "config.scaler");
  }

  if (j.contains("strategy")) {
    const auto& sj = j.at("strategy");
    const std::string w = "config.strategy";
    check_keys(sj, w, {"kind", "batch_size", "batch_count", "sample_size", "epochs", "persist_optimizer"});
    auto& s = c.plan.strategy;
    try {
      s.kind = parse_fusion_kind(get_or<std::string>(sj, "kind", "fedsam", w));
    } catch (const ConfigError& e) {
      bad(w + ".kind", e.what());
    }
    s.batch_size = get_count(sj, "batch_size", s.batch_size, w);
    s.batch_count = get_count(sj, "batch_count", s.batch_count, w);
    s.sample_size = get_count(sj, "sample_size", s.sample_size, w);
    s.epochs = get_count(sj, "epochs", s.epochs, w);
    s.persist_optimizer = get_or<bool>(sj, "persist_optimizer", false, w);
  }

  if (j.contains("plan")) {
    const auto& pj = j.at("plan");
    const std::string w = "config.plan";
    check_keys(pj, w, {"ae_rounds", "clf_rounds", "eval_every", "parallel_clients"});
    c.plan.ae_rounds = get_count(pj, "ae_rounds", c.plan.ae_rounds, w);
    c.plan.clf_rounds = get_count(pj, "clf_rounds", c.plan.clf_rounds, w);
    c.plan.eval_every = get_count(pj, "eval_every", c.plan.eval_every, w);
    c.plan.parallel_clients = get_or<bool>(pj, "parallel_clients", false, w);
  }
  c.plan.seed = c.seed;

  if (j.contains("model")) {
    const auto& mj = j.at("model");
    const std::string w = "config.model";
    check_keys(mj, w, {"ae_layers", "clf_layers", "hidden", "features", "ae_optimizer", "clf_optimizer"});
    c.model.ae_layers = get_or<std::vector<std::size_t>>(mj, "ae_layers", c.model.ae_layers, w);
    c.model.clf_layers = get_or<std::vector<std::size_t>>(mj, "clf_layers", c.model.clf_layers, w);
    try {
      c.model.hidden = parse_hidden_activation(get_or<std::string>(mj, "hidden", "relu", w));
    } catch (const ConfigError& e) {
      bad(w + ".hidden", e.what());
    }
    const auto features = get_or<std::string>(mj, "features", "vector", w);
    if (features == "vector") c.model.feature_mode = FeatureMode::Vector;
    else if (features == "scalar") c.model.feature_mode = FeatureMode::Scalar;
    else bad(w + ".features", "expected 'vector' or 'scalar'");
    if (mj.contains("ae_optimizer")) c.model.ae_optimizer = parse_optimizer(mj.at("ae_optimizer"), c.model.ae_optimizer, w + ".ae_optimizer");
    if (mj.contains("clf_optimizer")) c.model.clf_optimizer = parse_optimizer(mj.at("clf_optimizer"), c.model.clf_optimizer, w + ".clf_optimizer");
  }

  if (j.contains("baselines")) {
    const auto& bj = j.at("baselines");
    check_keys(bj, "config.baselines", {"individual_models", "threshold_baseline"});
    c.baselines.individual_models = get_or<bool>(bj, "individual_models", false, "config.baselines");
    c.baselines.threshold_baseline = get_or<bool>(bj, "threshold_baseline", false, "config.baselines");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FilesystemError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path().empty() ? "." : path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c) {
  json clients = json::array();
  for (const auto& cl : c.clients) {
    clients.push_back({{"name", cl.name}, {"labeled", cl.labeled}, {"source", source_json(cl.source)},
                       {"split", split_json(cl.split)}});
  }
  json extra = json::array();
  for (const auto& t : c.test.extra) {
    json tj{{"name", t.name}, {"source", source_json(t.source)}};
    if (t.split) tj["split"] = split_json(*t.split);
    extra.push_back(tj);
  }
  const auto& s = c.plan.strategy;
  json j{
      {"schema_version", c.schema_version},
      {"name", c.name},
      {"mode", c.mode == ExperimentMode::Central ? "central" : "federated"},
      {"seed", c.seed},
      {"allow_single_client", c.allow_single_client},
      {"transport", c.transport == TransportKind::Socket ? "socket" : "inprocess"},
      {"output_dir", c.output_dir.string()},
      {"checkpoint_every", c.checkpoint_every},
      {"clients", clients},
      {"test", {{"from_clients", c.test.from_clients}, {"extra", extra}}},
      {"scaler",
       {{"scope", c.scaler_scope == ScalerScope::Global ? "global" : "individual"},
        {"init", c.scaler_init.mode == ScalerInit::Sentinel ? "sentinel" : "random"},
        {"low", c.scaler_init.low},
        {"high", c.scaler_init.high},
        {"clamp", c.model.clamp_scaled}}},
      {"strategy",
       {{"kind", to_string(s.kind)},
        {"batch_size", s.batch_size},
        {"batch_count", s.batch_count},
        {"sample_size", s.sample_size},
        {"epochs", s.epochs},
        {"persist_optimizer", s.persist_optimizer}}},
      {"plan",
       {{"ae_rounds", c.plan.ae_rounds},
        {"clf_rounds", c.plan.clf_rounds},
        {"eval_every", c.plan.eval_every},
        {"parallel_clients", c.plan.parallel_clients}}},
      {"model",
       {{"ae_layers", c.model.ae_layers},
        {"clf_layers", c.model.clf_layers},
        {"hidden", to_string(c.model.hidden)},
        {"features", c.model.feature_mode == FeatureMode::Vector ? "vector" : "scalar"},
        {"ae_optimizer", optimizer_json(c.model.ae_optimizer)},
        {"clf_optimizer", optimizer_json(c.model.clf_optimizer)}}},
      {"baselines",
       {{"individual_models", c.baselines.individual_models},
        {"threshold_baseline", c.baselines.threshold_baseline}}},
  };
  return j.dump(2) + "\n";
}

namespace {

std::filesystem::path resolve(const ExperimentConfig& c, const std::filesystem::path& p) {
  return p.is_absolute() ? p : c.base_dir / p;
}

void validate_source(const ExperimentConfig& c, const DataSource& s, const std::string& where,
                     std::vector<std::string>& out) {
  if (s.csv.has_value() == s.synth.has_value()) {
    out.push_back(where + ": exactly one of 'csv' or 'synth' is required");
    return;
  }
  if (s.csv && !std::filesystem::exists(resolve(c, *s.csv))) {
    out.push_back(where + ": file not found: " + resolve(c, *s.csv).string());
  }
  if (s.synth) {
    if (s.synth->components.empty()) out.push_back(where + ": synth needs at least one component");
    if (s.synth->benign_rows + s.synth->attack_rows == 0) out.push_back(where + ": synth produces no rows");
  }
}

}  // namespace

std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> v;
  if (c.schema_version != kConfigSchemaVersion) {
    v.push_back("schema_version must be " + std::to_string(kConfigSchemaVersion));
  }
  if (c.name.empty()) v.push_back("name is required");
  if (c.clients.empty()) v.push_back("at least one client/data source is required");
  if (c.mode == ExperimentMode::Federated && c.clients.size() == 1 && !c.allow_single_client) {
    v.push_back("federated mode needs at least 2 clients (set allow_single_client for K=1 reduction runs)");
  }
  std::set<std::string> names;
  bool any_classifier = false;
  for (std::size_t i = 0; i < c.clients.size(); ++i) {
    const auto& cl = c.clients[i];
    const std::string w = "clients[" + std::to_string(i) + "]";
    if (cl.name.empty()) v.push_back(w + ": name is required");
    if (!names.insert(cl.name).second) v.push_back(w + ": duplicate client name '" + cl.name + "'");
    validate_source(c, cl.source, w + ".source", v);
    if (!cl.labeled) {
      if (c.mode == ExperimentMode::Central) {
        v.push_back(w + ": unlabeled clients are only allowed in federated mode");
      }
      if (cl.split.clf_train_benign + cl.split.clf_train_attack + cl.split.test_attack > 0) {
        v.push_back(w + ": unlabeled client can only provide autoencoder and benign test rows");
      }
    } else if (cl.split.clf_train_benign + cl.split.clf_train_attack > 0) {
      any_classifier = true;
    }
    if (cl.split.ae_train_benign == 0) v.push_back(w + ": ae_train_benign must be > 0");
    if (cl.source.synth) {
      const auto& s = *cl.source.synth;
      if (cl.split.ae_train_benign + cl.split.clf_train_benign + cl.split.test_benign > s.benign_rows) {
        v.push_back(w + ": split asks for more benign rows than synth benign_rows");
      }
      if (cl.split.clf_train_attack + cl.split.test_attack > s.attack_rows) {
        v.push_back(w + ": split asks for more attack rows than synth attack_rows");
      }
    }
  }
  if (!c.clients.empty() && !any_classifier) {
    v.push_back("no client provides labeled classifier rows");
  }
  bool any_test = false;
  if (c.test.from_clients) {
    for (const auto& cl : c.clients) any_test = any_test || cl.split.test_benign + cl.split.test_attack > 0;
  }
  for (std::size_t i = 0; i < c.test.extra.size(); ++i) {
    validate_source(c, c.test.extra[i].source, "test.extra[" + std::to_string(i) + "].source", v);
    any_test = true;
  }
  if (!any_test) v.push_back("test set is empty (no client test rows and no extra test sources)");
  if (c.scaler_init.mode == ScalerInit::Random && !(c.scaler_init.low < c.scaler_init.high)) {
    v.push_back("scaler: random init needs low < high");
  }
  auto collect = [&](auto&& check, const std::string& where) {
    try {
      check();
    } catch (const Error& e) {
      v.push_back(where + ": " + e.what());
    }
  };
  collect([&] { c.plan.validate(); }, "plan");
  collect([&] { c.model.validate(); }, "model");
  if (c.baselines.threshold_baseline && !any_classifier) {
    v.push_back("threshold baseline needs labeled classifier rows for validation");
  }
  return v;
}

std::vector<std::string> validate_config_file(const std::filesystem::path& path) {
  try {
    return validate_config(load_config(path));
  } catch (const ConfigError& e) {
    return {e.what()};
  }
}

// ---------------------------------------------------------------------------
// Running

namespace {

FlowDataset load_source(const ExperimentConfig& c, const DataSource& s, const std::string& name,
                        bool labeled) {
  FlowDataset d;
  const std::size_t width = c.model.ae_layers.front();
  if (s.csv) {
    const auto path = resolve(c, *s.csv);
    if (!std::filesystem::exists(path)) throw FilesystemError("data file not found: " + path.string());
    const auto schema = width == FeatureSchema::cic_flowmeter().feature_count()
                            ? FeatureSchema::cic_flowmeter()
                            : FeatureSchema::anonymous(width);
    auto loaded = load_flow_csv(path, schema);
    if (loaded.stats.dropped_non_finite + loaded.stats.dropped_unparseable > 0) {
      log::warn(path.string() + ": dropped " + std::to_string(loaded.stats.dropped_non_finite) +
                " non-finite and " + std::to_string(loaded.stats.dropped_unparseable) +
                " unparseable rows");
    }
    d = std::move(loaded.dataset);
  } else {
    auto spec = *s.synth;
    spec.name = name;
    spec.labeled = labeled;
    d = synth_client(spec, s.seed ? *s.seed : derive_seed(c.seed, "synth:" + name), width);
  }
  d.name = name;
  if (!labeled) d.labels.reset();
  return d;
}

struct PreparedClient {
  std::string name;
  FlowDataset ae_train;
  std::optional<FlowDataset> clf_train;
};

struct PreparedData {
  std::vector<PreparedClient> clients;
  FlowDataset test;
  EvalSets eval;
};

PreparedData prepare(const ExperimentConfig& c) {
  PreparedData p;
  std::vector<FlowDataset> tests;
  for (const auto& cl : c.clients) {
    const auto data = load_source(c, cl.source, cl.name, cl.labeled);
    auto parts = split(data, cl.split);
    PreparedClient pc{cl.name, std::move(parts.ae_train), std::nullopt};
    if (cl.labeled && parts.clf_train.rows() > 0) pc.clf_train = std::move(parts.clf_train);
    p.clients.push_back(std::move(pc));
    if (c.test.from_clients && parts.test.rows() > 0) tests.push_back(std::move(parts.test));
  }
  for (const auto& t : c.test.extra) {
    // Extra sources are treated as labeled; a missing label column reads as benign.
    auto data = load_source(c, t.source, t.name, true);
    if (!data.labeled()) data.labels = std::vector<int>(data.rows(), 0);
    tests.push_back(t.split ? split(data, *t.split).test : std::move(data));
  }
  p.test = concat(tests, "test");
  if (p.test.rows() == 0) throw EmptyInputError("test set is empty");
  const auto benign_rows = p.test.rows_of_class(0);
  p.eval.benign = p.test.subset(benign_rows, "eval/benign");
  p.eval.labeled = p.test;
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FilesystemError("cannot write " + path.string());
  out << text;
  if (!out) throw FilesystemError("failed writing " + path.string());
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const auto violations = validate_config(config);
  if (!violations.empty()) {
    std::string msg = "invalid config:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ConfigError(msg);
  }
  const auto started = iso_now();
  const auto t0 = std::chrono::steady_clock::now();

  ExperimentResult result;
  result.run_dir = config.output_dir / config.name / ("seed-" + std::to_string(config.seed));
  std::filesystem::create_directories(result.run_dir / "checkpoints");
  write_text(result.run_dir / "config.json", config_to_json(config));

  auto data = prepare(config);
  auto checkpoint = [&](Phase phase, std::size_t round, const DenseNet& net) {
    const std::string tag = phase == Phase::Autoencoder ? "ae" : "clf";
    save_checkpoint(net, result.run_dir / "checkpoints" / (tag + "_round" + std::to_string(round) + ".fdnn"));
  };

  if (config.mode == ExperimentMode::Central) {
    std::vector<FlowDataset> ae_parts, clf_parts;
    for (auto& cl : data.clients) {
      ae_parts.push_back(cl.ae_train);
      if (cl.clf_train) clf_parts.push_back(*cl.clf_train);
    }
    auto central = train_central(concat(ae_parts, "central/ae_train"), concat(clf_parts, "central/clf_train"),
                                 config.plan, config.model, config.scaler_init, &data.eval);
    result.eval_scaler = std::move(central.scaler);
    result.autoencoder = std::move(central.autoencoder);
    result.classifier = std::move(central.classifier);
    result.logs = std::move(central.logs);
  } else {
    std::vector<std::unique_ptr<ClientNode>> nodes;  // outlives the transport
    std::unique_ptr<Transport> transport;
    if (config.transport == TransportKind::Socket) transport = std::make_unique<SocketTransport>();
    else transport = std::make_unique<InProcessTransport>();
    std::vector<ClientInfo> infos;
    for (std::size_t i = 0; i < data.clients.size(); ++i) {
      auto& cl = data.clients[i];
      nodes.push_back(std::make_unique<ClientNode>(cl.name, cl.ae_train, cl.clf_train, config.model,
                                                   config.plan.strategy, derive_seed(config.seed, "client", i)));
      infos.push_back({cl.name, nodes.back()->participates_in_classifier()});
    }
    for (auto& n : nodes) transport->attach(n->id(), *n);
    FederationServer server(*transport, infos, config.plan, config.model, data.eval);
    if (config.checkpoint_every > 0) server.set_checkpoint_hook(config.checkpoint_every, checkpoint);
    server.run_scaler_phase(config.scaler_scope, config.scaler_init);
    server.run_ae_phase();
    server.run_feature_phase();
    server.run_clf_phase();
    result.eval_scaler = server.eval_scaler();
    result.autoencoder = server.autoencoder();
    result.classifier = server.classifier();
    result.logs = server.logs();
    result.transport_messages = transport->records().size();
    result.transport_invalid_payloads = transport->invalid_payload_count();
  }

  const auto preds = predict_labels(result.autoencoder, result.classifier, result.eval_scaler, data.test,
                                    config.model.feature_mode, config.model.clamp_scaled);
  result.report = class_report(confusion(preds, *data.test.labels));

  if (config.baselines.individual_models) {
    for (const auto& cl : data.clients) {
      if (!cl.clf_train) continue;
      auto own = train_central(cl.ae_train, *cl.clf_train, config.plan, config.model,
                               {ScalerInit::Sentinel}, nullptr);
      const auto p = predict_labels(own.autoencoder, own.classifier, own.scaler, data.test,
                                    config.model.feature_mode, config.model.clamp_scaled);
      result.individual_reports[cl.name] = class_report(confusion(p, *data.test.labels));
    }
  }

  if (config.baselines.threshold_baseline) {
    std::vector<FlowDataset> clf_parts;
    for (const auto& cl : data.clients) {
      if (cl.clf_train) clf_parts.push_back(*cl.clf_train);
    }
    const auto val = concat(clf_parts, "validation");
    const auto benign = val.subset(val.rows_of_class(0));
    const auto attack = val.subset(val.rows_of_class(1));
    result.threshold = threshold_baseline(result.autoencoder, result.eval_scaler, benign, attack, data.test,
                                          config.model.clamp_scaled);
  }

  // Artifacts
  write_text(result.run_dir / "scaler.txt", serialize_scaler(result.eval_scaler));
  write_text(result.run_dir / "round_log.csv", round_log_csv(result.logs));
  if (!result.logs.empty()) emit_loss_curve(result.logs, result.run_dir / "loss_curve.csv");
  save_checkpoint(result.autoencoder, result.run_dir / "checkpoints" / "ae_final.fdnn");
  save_checkpoint(result.classifier, result.run_dir / "checkpoints" / "clf_final.fdnn");

  json report{{"name", config.name},
              {"mode", config.mode == ExperimentMode::Central ? "central" : "federated"},
              {"seed", config.seed},
              {"scaler_scope", config.scaler_scope == ScalerScope::Global ? "global" : "individual"},
              {"strategy", to_string(config.plan.strategy.kind)},
              {"test_rows", data.test.rows()},
              {"model", report_json(result.report)}};
  std::string text = format_report(config.name + " (" + std::string(config.mode == ExperimentMode::Central ? "central" : "federated") + ")",
                                   result.report);
  if (!result.individual_reports.empty()) {
    json ind = json::object();
    for (const auto& [name, r] : result.individual_reports) {
      ind[name] = report_json(r);
      text += "\n" + format_report("individual model: " + name, r);
    }
    report["individual_models"] = ind;
  }
  if (result.threshold) {
    report["threshold_baseline"] = {{"threshold", result.threshold->threshold},
                                    {"validation_f1", result.threshold->validation_f1},
                                    {"report", report_json(result.threshold->report)}};
    text += "\n" + format_report("autoencoder threshold baseline (t=" + format_double(result.threshold->threshold) + ")",
                                 result.threshold->report);
  }
  if (config.mode == ExperimentMode::Federated) {
    report["transport"] = {{"messages", result.transport_messages},
                           {"invalid_payloads", result.transport_invalid_payloads}};
  }
  write_text(result.run_dir / "report.json", report.dump(2) + "\n");
  write_text(result.run_dir / "report.txt", text);

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json meta{{"started_utc", started}, {"finished_utc", iso_now()}, {"wall_seconds", seconds}};
  write_text(result.run_dir / "metadata.json", meta.dump(2) + "\n");
  return result;
}

}  // namespace fedids
