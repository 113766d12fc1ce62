#include "fedsim/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedsim/errors.hpp"

namespace fedsim {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// enum <-> string

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::BinaryLogistic: return "binary_logistic";
    case ModelKind::MultinomialLogistic: return "multinomial_logistic";
    case ModelKind::TwoLayerMlp: return "two_layer_mlp";
    case ModelKind::LeastSquares: return "least_squares";
    case ModelKind::TraceRegression: return "trace_regression";
  }
  return "?";
}

ModelKind model_kind_from(const std::string& s) {
  for (ModelKind k : {ModelKind::BinaryLogistic, ModelKind::MultinomialLogistic,
                      ModelKind::TwoLayerMlp, ModelKind::LeastSquares,
                      ModelKind::TraceRegression}) {
    if (s == model_kind_name(k)) return k;
  }
  throw ConfigError("model.kind", "unknown model kind '" + s + "'");
}

const char* data_kind_name(DataKind k) {
  switch (k) {
    case DataKind::SyntheticLogistic: return "synthetic_logistic";
    case DataKind::Lrme: return "lrme";
    case DataKind::Idx: return "idx";
    case DataKind::Csv: return "csv";
  }
  return "?";
}

DataKind data_kind_from(const std::string& s) {
  for (DataKind k :
       {DataKind::SyntheticLogistic, DataKind::Lrme, DataKind::Idx, DataKind::Csv}) {
    if (s == data_kind_name(k)) return k;
  }
  throw ConfigError("data.kind", "unknown data kind '" + s + "'");
}

const char* scheme_name(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::Iid: return "iid";
    case PartitionScheme::Sorted: return "sorted";
    case PartitionScheme::Mixture: return "mixture";
  }
  return "?";
}

PartitionScheme scheme_from(const std::string& s) {
  for (PartitionScheme k :
       {PartitionScheme::Iid, PartitionScheme::Sorted, PartitionScheme::Mixture}) {
    if (s == scheme_name(k)) return k;
  }
  throw ConfigError("partition.scheme", "unknown partition scheme '" + s + "'");
}

// ---------------------------------------------------------------------------
// strict field access

void check_known_keys(const json& obj, const std::string& scope,
                      const std::set<std::string>& known) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) {
      const std::string path = scope.empty() ? key : scope + "." + key;
      throw ConfigError(path, "unknown field '" + path + "'");
    }
  }
}

template <typename T>
T get_or(const json& obj, const std::string& scope, const std::string& key,
         T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    const std::string path = scope.empty() ? key : scope + "." + key;
    throw ConfigError(path, "field '" + path + "' has the wrong type");
  }
}

// ---------------------------------------------------------------------------
// ExperimentConfig <-> json

ExperimentConfig config_from_json(const json& j) {
  static const std::set<std::string> top_keys = {
      "algorithm", "clients", "participants", "rounds", "local_steps",
      "blocks", "eta", "lambda", "rho", "eta_local", "eta_global",
      "prox_steps", "alpha_momentum", "aggregate_by_s", "model", "data",
      "partition", "seeds", "seed", "eval_every", "accuracy_target",
      "warm_start", "sweep", "dlg"};
  if (!j.is_object()) throw ConfigError("", "config root must be a JSON object");
  check_known_keys(j, "", top_keys);

  ExperimentConfig cfg;
  cfg.algorithm =
      algorithm_from_name(get_or<std::string>(j, "", "algorithm", "losac"));
  cfg.n_clients = get_or<std::size_t>(j, "", "clients", 100);
  cfg.participants = get_or<std::size_t>(j, "", "participants", 10);
  cfg.rounds = get_or<std::size_t>(j, "", "rounds", 100);
  cfg.algo.local_steps = get_or<std::size_t>(j, "", "local_steps", 5);
  cfg.algo.blocks = get_or<std::size_t>(j, "", "blocks", 5);
  cfg.algo.eta = get_or<double>(j, "", "eta", 1e-4);
  cfg.algo.lambda = get_or<double>(j, "", "lambda", 0.0);
  cfg.algo.rho = get_or<double>(j, "", "rho", 5.0);
  cfg.algo.eta_local = get_or<double>(j, "", "eta_local", 1e-4);
  cfg.algo.eta_global = get_or<double>(j, "", "eta_global", 1e-4);
  cfg.algo.prox_steps = get_or<std::size_t>(j, "", "prox_steps", 20);
  cfg.algo.alpha_momentum = get_or<double>(j, "", "alpha_momentum", 0.1);
  cfg.algo.aggregate_by_s = get_or<bool>(j, "", "aggregate_by_s", false);
  cfg.eval_every = get_or<std::size_t>(j, "", "eval_every", 0);
  cfg.warm_start = get_or<bool>(j, "", "warm_start", false);
  if (j.contains("accuracy_target")) {
    cfg.accuracy_target = get_or<double>(j, "", "accuracy_target", 0.85);
  }

  if (j.contains("seeds")) {
    cfg.seeds = get_or<std::vector<std::uint64_t>>(j, "", "seeds", {1});
  } else if (j.contains("seed")) {
    cfg.seeds = {get_or<std::uint64_t>(j, "", "seed", 1)};
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds", "seed list is empty");

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_known_keys(m, "model", {"kind", "classes", "hidden", "l2"});
    cfg.model.kind =
        model_kind_from(get_or<std::string>(m, "model", "kind",
                                            "multinomial_logistic"));
    cfg.model.classes = get_or<std::size_t>(m, "model", "classes", 10);
    cfg.model.hidden = get_or<std::size_t>(m, "model", "hidden", 200);
    cfg.model.mu_reg = get_or<double>(m, "model", "l2", 0.0);
    if (cfg.model.mu_reg < 0.0) {
      throw ConfigError("model.l2", "l2 must be non-negative");
    }
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_known_keys(d, "data",
                     {"kind", "dim", "classes", "samples", "test_samples",
                      "separation", "rank", "samples_per_client", "noise_sigma",
                      "train_images", "train_labels", "test_images",
                      "test_labels", "train", "test", "label_column"});
    cfg.data.kind =
        data_kind_from(get_or<std::string>(d, "data", "kind",
                                           "synthetic_logistic"));
    cfg.data.dim = get_or<std::size_t>(d, "data", "dim", 50);
    cfg.data.classes = get_or<std::size_t>(d, "data", "classes", 10);
    cfg.data.samples = get_or<std::size_t>(d, "data", "samples", 2000);
    cfg.data.test_samples = get_or<std::size_t>(d, "data", "test_samples", 1000);
    cfg.data.separation = get_or<double>(d, "data", "separation", 3.0);
    cfg.data.rank = get_or<std::size_t>(d, "data", "rank", 4);
    cfg.data.samples_per_client =
        get_or<std::size_t>(d, "data", "samples_per_client", 25);
    cfg.data.noise_sigma = get_or<double>(d, "data", "noise_sigma", 0.1);
    cfg.data.train_images = get_or<std::string>(d, "data", "train_images", "");
    cfg.data.train_labels = get_or<std::string>(d, "data", "train_labels", "");
    cfg.data.test_images = get_or<std::string>(d, "data", "test_images", "");
    cfg.data.test_labels = get_or<std::string>(d, "data", "test_labels", "");
    cfg.data.train_path = get_or<std::string>(d, "data", "train", "");
    cfg.data.test_path = get_or<std::string>(d, "data", "test", "");
    cfg.data.label_column = get_or<std::string>(d, "data", "label_column", "");
  }

  if (j.contains("partition")) {
    const json& p = j.at("partition");
    check_known_keys(p, "partition", {"scheme", "c_percent"});
    cfg.partition = scheme_from(get_or<std::string>(p, "partition", "scheme", "iid"));
    if (p.contains("c_percent")) {
      cfg.c_percent = get_or<double>(p, "partition", "c_percent", 0.0);
    }
  }

  // range validation (field names match the file keys)
  if (cfg.n_clients < 1) throw ConfigError("clients", "clients must be >= 1");
  if (cfg.participants < 1 || cfg.participants > cfg.n_clients) {
    throw ConfigError("participants",
                      "participants must satisfy 1 <= participants <= clients");
  }
  if (cfg.rounds < 1) throw ConfigError("rounds", "rounds must be >= 1");
  if (cfg.algo.local_steps < 1) {
    throw ConfigError("local_steps", "local_steps must be >= 1");
  }
  if (cfg.algo.blocks < 1) throw ConfigError("blocks", "blocks must be >= 1");
  if (!(cfg.algo.eta > 0.0)) throw ConfigError("eta", "eta must be positive");
  if (cfg.algo.lambda < 0.0) throw ConfigError("lambda", "lambda must be >= 0");
  if (cfg.algorithm == Algorithm::FedAdmm && !(cfg.algo.rho > 0.0)) {
    throw ConfigError("rho", "rho must be positive for fedadmm");
  }
  if (cfg.partition == PartitionScheme::Mixture) {
    if (!cfg.c_percent) {
      throw ConfigError("partition.c_percent",
                        "mixture partitions require c_percent");
    }
    if (*cfg.c_percent < 0.0 || *cfg.c_percent > 100.0) {
      throw ConfigError("partition.c_percent", "c_percent must be in [0, 100]");
    }
  } else if (cfg.c_percent) {
    throw ConfigError("partition.c_percent",
                      "c_percent only applies to the mixture scheme");
  }
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["algorithm"] = algorithm_name(cfg.algorithm);
  j["clients"] = cfg.n_clients;
  j["participants"] = cfg.participants;
  j["rounds"] = cfg.rounds;
  j["local_steps"] = cfg.algo.local_steps;
  j["blocks"] = cfg.algo.blocks;
  j["eta"] = cfg.algo.eta;
  j["lambda"] = cfg.algo.lambda;
  j["rho"] = cfg.algo.rho;
  j["eta_local"] = cfg.algo.eta_local;
  j["eta_global"] = cfg.algo.eta_global;
  j["prox_steps"] = cfg.algo.prox_steps;
  j["alpha_momentum"] = cfg.algo.alpha_momentum;
  j["aggregate_by_s"] = cfg.algo.aggregate_by_s;
  j["eval_every"] = cfg.eval_every;
  j["warm_start"] = cfg.warm_start;
  if (cfg.accuracy_target) j["accuracy_target"] = *cfg.accuracy_target;
  j["seeds"] = cfg.seeds;
  j["model"] = {{"kind", model_kind_name(cfg.model.kind)},
                {"classes", cfg.model.classes},
                {"hidden", cfg.model.hidden},
                {"l2", cfg.model.mu_reg}};
  json d;
  d["kind"] = data_kind_name(cfg.data.kind);
  d["dim"] = cfg.data.dim;
  d["classes"] = cfg.data.classes;
  d["samples"] = cfg.data.samples;
  d["test_samples"] = cfg.data.test_samples;
  d["separation"] = cfg.data.separation;
  d["rank"] = cfg.data.rank;
  d["samples_per_client"] = cfg.data.samples_per_client;
  d["noise_sigma"] = cfg.data.noise_sigma;
  if (!cfg.data.train_images.empty()) d["train_images"] = cfg.data.train_images;
  if (!cfg.data.train_labels.empty()) d["train_labels"] = cfg.data.train_labels;
  if (!cfg.data.test_images.empty()) d["test_images"] = cfg.data.test_images;
  if (!cfg.data.test_labels.empty()) d["test_labels"] = cfg.data.test_labels;
  if (!cfg.data.train_path.empty()) d["train"] = cfg.data.train_path;
  if (!cfg.data.test_path.empty()) d["test"] = cfg.data.test_path;
  if (!cfg.data.label_column.empty()) d["label_column"] = cfg.data.label_column;
  j["data"] = d;
  json p;
  p["scheme"] = scheme_name(cfg.partition);
  if (cfg.c_percent) p["c_percent"] = *cfg.c_percent;
  j["partition"] = p;
  return j;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string canonical_config_json(const ExperimentConfig& cfg) {
  return config_to_json(cfg).dump();  // object keys are sorted by nlohmann
}

ExperimentConfig experiment_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::string compute_run_id(const ExperimentConfig& cfg, std::uint64_t seed) {
  return hex16(fnv1a64(canonical_config_json(cfg) + ":" + std::to_string(seed)));
}

namespace {

std::string run_label(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::ostringstream os;
  os << algorithm_name(cfg.algorithm) << "_T" << cfg.algo.local_steps << "_S"
     << cfg.participants << "_M" << cfg.algo.blocks;
  if (cfg.c_percent) os << "_c" << *cfg.c_percent;
  os << "_seed" << seed;
  return os.str();
}

// sweep expansion: cartesian product over the recognized swept fields
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base,
                                           const json& sweep) {
  check_known_keys(sweep, "sweep",
                   {"local_steps", "participants", "blocks", "c_percent",
                    "algorithm"});
  std::vector<ExperimentConfig> configs{base};
  const auto apply = [&](const std::string& key, auto setter) {
    if (!sweep.contains(key)) return;
    const json& values = sweep.at(key);
    if (!values.is_array() || values.empty()) {
      throw ConfigError("sweep." + key, "sweep values must be a non-empty array");
    }
    std::vector<ExperimentConfig> next;
    next.reserve(configs.size() * values.size());
    for (const auto& cfg : configs) {
      for (const auto& v : values) {
        ExperimentConfig c = cfg;
        setter(c, v);
        next.push_back(std::move(c));
      }
    }
    configs = std::move(next);
  };
  apply("algorithm", [](ExperimentConfig& c, const json& v) {
    c.algorithm = algorithm_from_name(v.get<std::string>());
  });
  apply("local_steps", [](ExperimentConfig& c, const json& v) {
    c.algo.local_steps = v.get<std::size_t>();
  });
  apply("participants", [](ExperimentConfig& c, const json& v) {
    c.participants = v.get<std::size_t>();
  });
  apply("blocks", [](ExperimentConfig& c, const json& v) {
    c.algo.blocks = v.get<std::size_t>();
  });
  apply("c_percent", [](ExperimentConfig& c, const json& v) {
    c.partition = PartitionScheme::Mixture;
    c.c_percent = v.get<double>();
  });
  return configs;
}

}  // namespace

RunManifest parse_config(const std::string& path, const std::string& mode,
                         std::optional<std::uint64_t> seed_override,
                         const std::string& out_dir) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();

  json root;
  try {
    root = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }

  ExperimentConfig base = config_from_json(root);
  if (seed_override) base.seeds = {*seed_override};

  RunManifest manifest;
  manifest.config_path = path;
  manifest.out_dir = out_dir;

  if (mode == "lrme") {
    if (base.data.kind != DataKind::Lrme ||
        base.model.kind != ModelKind::TraceRegression) {
      throw ConfigError("data.kind",
                        "the lrme subcommand requires data.kind=\"lrme\" and "
                        "model.kind=\"trace_regression\"");
    }
  }

  if (mode == "dlg") {
    if (!root.contains("dlg")) {
      throw ConfigError("dlg", "the dlg subcommand requires a dlg section");
    }
    const json& d = root.at("dlg");
    check_known_keys(d, "dlg",
                     {"algorithm", "attack_steps", "eta_d", "init_scale",
                      "target", "attack_round", "victim"});
    DlgPlan plan;
    plan.config = base;
    plan.seed = base.seeds.front();
    plan.algorithm_label = get_or<std::string>(d, "dlg", "algorithm", "dsgd");
    if (plan.algorithm_label == "dsgd") {
      // distributed SGD: one full-batch step per round, gradient on the wire
      plan.config.algorithm = Algorithm::FedAvg;
      plan.config.algo.local_steps = 1;
      plan.config.algo.blocks = 1;
      plan.attack.target_kind = DlgTarget::RawGradient;
    } else {
      plan.config.algorithm = algorithm_from_name(plan.algorithm_label);
      plan.attack.target_kind = plan.config.algorithm == Algorithm::MimeSvrg
                                    ? DlgTarget::RawGradient
                                    : DlgTarget::AveragedDelta;
    }
    if (d.contains("target")) {
      const auto t = get_or<std::string>(d, "dlg", "target", "");
      if (t == "raw_gradient") {
        plan.attack.target_kind = DlgTarget::RawGradient;
      } else if (t == "averaged_delta") {
        plan.attack.target_kind = DlgTarget::AveragedDelta;
      } else {
        throw ConfigError("dlg.target", "target must be raw_gradient or "
                                        "averaged_delta");
      }
    }
    plan.attack.attack_steps = get_or<std::size_t>(d, "dlg", "attack_steps", 100);
    plan.attack.eta_d = get_or<double>(d, "dlg", "eta_d", 1e-3);
    plan.attack.init_scale = get_or<double>(d, "dlg", "init_scale", 1.0);
    plan.attack_round = get_or<std::size_t>(d, "dlg", "attack_round", 5);
    plan.victim = get_or<std::size_t>(d, "dlg", "victim", 0);
    if (plan.attack.attack_steps < 1) {
      throw ConfigError("dlg.attack_steps", "attack_steps must be >= 1");
    }
    if (!(plan.attack.eta_d > 0.0)) {
      throw ConfigError("dlg.eta_d", "eta_d must be positive");
    }
    if (plan.victim >= base.n_clients) {
      throw ConfigError("dlg.victim", "victim index out of range");
    }
    plan.run_id = compute_run_id(plan.config, plan.seed);
    manifest.dlg = std::move(plan);
    return manifest;
  }

  std::vector<ExperimentConfig> configs{base};
  if (mode == "sweep") {
    if (!root.contains("sweep")) {
      configs = {base};  // empty sweep degenerates to a single run
    } else {
      configs = expand_sweep(base, root.at("sweep"));
    }
  } else if (root.contains("sweep")) {
    throw ConfigError("sweep", "a sweep section requires the sweep subcommand");
  }

  for (const auto& cfg : configs) {
    for (const std::uint64_t seed : cfg.seeds) {
      RunPlan plan;
      plan.config = cfg;
      plan.seed = seed;
      plan.run_id = compute_run_id(cfg, seed);
      plan.label = run_label(cfg, seed);
      manifest.runs.push_back(std::move(plan));
    }
  }
  return manifest;
}

std::string trace_to_csv(const MetricsTrace& trace) {
  std::string out =
      "round,train_loss,test_loss,test_acc,dir_variance,recovery_err,"
      "recovered_rank\n";
  char buf[256];
  for (const auto& r : trace.records) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                  r.round, r.train_loss, r.test_loss, r.test_acc, r.dir_variance,
                  r.recovery_err, r.recovered_rank);
    out += buf;
  }
  return out;
}

}  // namespace fedsim
