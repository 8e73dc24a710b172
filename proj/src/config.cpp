#include "ruda/config.hpp"

#include "ruda/errors.hpp"
#include "ruda/rng.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace ruda::train {

namespace {

const std::vector<std::pair<MethodKind, std::string>>& method_table() {
  static const std::vector<std::pair<MethodKind, std::string>> table{
      {MethodKind::SourceOnly, "SourceOnly"}, {MethodKind::DANN, "DANN"},
      {MethodKind::CDAN, "CDAN"},             {MethodKind::CDAN_W, "CDAN_W"},
      {MethodKind::RUDA, "RUDA"},             {MethodKind::RUDA_W, "RUDA_W"}};
  return table;
}

void require_object(const Json& doc, const std::string& where, std::set<std::string> allowed) {
  if (!doc.is_object()) throw ContractError(where + " must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!allowed.count(key)) throw ContractError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const Json& doc, const char* key, T& out, const std::string& where) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ContractError("wrong type for '" + std::string(key) + "' in " + where);
  }
}

void read_widths(const Json& doc, const char* key, std::vector<Eigen::Index>& out) {
  if (!doc.contains(key)) return;
  std::vector<long long> raw;
  read(doc, key, raw, "networks");
  out.assign(raw.begin(), raw.end());
}

Json widths_json(const std::vector<Eigen::Index>& w) {
  return std::vector<long long>(w.begin(), w.end());
}

}  // namespace

MethodKind parse_method(const std::string& name) {
  for (const auto& [kind, label] : method_table()) {
    if (label == name) return kind;
  }
  throw ContractError("unknown method '" + name + "'");
}

std::string method_name(MethodKind m) {
  for (const auto& [kind, label] : method_table()) {
    if (kind == m) return label;
  }
  return "?";
}

bool is_weighted(MethodKind m) { return m == MethodKind::CDAN_W || m == MethodKind::RUDA_W; }

bool is_adversarial(MethodKind m) { return m != MethodKind::SourceOnly; }

bool uses_domain_discriminator(MethodKind m) {
  return m == MethodKind::DANN || m == MethodKind::CDAN_W || m == MethodKind::RUDA ||
         m == MethodKind::RUDA_W;
}

void DatasetConfig::validate() const {
  if (kind == "two_moons") {
    if (moons.n_per_domain < 2) throw ContractError("dataset: n_per_domain must be >= 2");
    if (!(moons.noise_sd >= 0.0)) throw ContractError("dataset: noise_sd must be >= 0");
  } else if (kind == "idx") {
    if (source_images.empty() || source_labels.empty() || target_images.empty() ||
        target_labels.empty()) {
      throw ContractError("dataset: idx needs source/target image and label paths");
    }
    if (classes < 2 || pool < 1) throw ContractError("dataset: classes must be >= 2, pool >= 1");
  } else {
    throw ContractError("dataset: unknown kind '" + kind + "'");
  }
  if (shift) shift->validate(kind == "two_moons" ? 2 : classes);
}

void ExperimentConfig::validate() const {
  dataset.validate();
  schedule.validate();
  if (iterations < 1) throw ContractError("iterations must be >= 1");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (seeds.empty()) throw ContractError("seeds must be nonempty");
  if (log_interval < 1) throw ContractError("log_interval must be >= 1");
  if (threads < 1) throw ContractError("threads must be >= 1");
  if (networks.phi.empty()) throw ContractError("networks.phi needs at least the representation width");
  for (const auto* w : {&networks.phi, &networks.classifier, &networks.discriminator,
                        &networks.label_discriminator}) {
    for (Eigen::Index v : *w) {
      if (v < 1) throw ContractError("network widths must be positive");
    }
  }
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) {
    throw ContractError("optimizer.momentum must lie in [0, 1)");
  }
  if (!(optimizer.weight_decay >= 0.0)) throw ContractError("optimizer.weight_decay must be >= 0");
}

DatasetConfig dataset_from_json(const Json& doc) {
  const std::string where = "dataset";
  require_object(doc, where,
                 {"kind", "n_per_domain", "noise_sd", "source_priors", "target_priors",
                  "rotation_deg", "seed", "source_images", "source_labels", "target_images",
                  "target_labels", "classes", "pool", "shift", "shift_seed"});
  DatasetConfig d;
  read(doc, "kind", d.kind, where);
  long long n = d.moons.n_per_domain, classes = d.classes, pool = d.pool;
  read(doc, "n_per_domain", n, where);
  read(doc, "noise_sd", d.moons.noise_sd, where);
  read(doc, "source_priors", d.moons.source_priors, where);
  read(doc, "target_priors", d.moons.target_priors, where);
  read(doc, "rotation_deg", d.moons.target_rotation_deg, where);
  read(doc, "seed", d.moons.seed, where);
  read(doc, "source_images", d.source_images, where);
  read(doc, "source_labels", d.source_labels, where);
  read(doc, "target_images", d.target_images, where);
  read(doc, "target_labels", d.target_labels, where);
  read(doc, "classes", classes, where);
  read(doc, "pool", pool, where);
  read(doc, "shift_seed", d.shift_seed, where);
  d.moons.n_per_domain = n;
  d.classes = classes;
  d.pool = pool;
  if (doc.contains("shift")) {
    const Json& s = doc.at("shift");
    require_object(s, "dataset.shift", {"classes", "keep_fraction"});
    data::ShiftSpec spec;
    read(s, "classes", spec.classes, "dataset.shift");
    read(s, "keep_fraction", spec.keep_fraction, "dataset.shift");
    d.shift = spec;
  }
  d.validate();
  return d;
}

Json dataset_to_json(const DatasetConfig& d) {
  Json j = {{"kind", d.kind}};
  if (d.kind == "two_moons") {
    j["n_per_domain"] = d.moons.n_per_domain;
    j["noise_sd"] = d.moons.noise_sd;
    j["source_priors"] = d.moons.source_priors;
    j["target_priors"] = d.moons.target_priors;
    j["rotation_deg"] = d.moons.target_rotation_deg;
    j["seed"] = d.moons.seed;
  } else {
    j["source_images"] = d.source_images;
    j["source_labels"] = d.source_labels;
    j["target_images"] = d.target_images;
    j["target_labels"] = d.target_labels;
    j["classes"] = d.classes;
    j["pool"] = d.pool;
  }
  if (d.shift) {
    j["shift"] = {{"classes", d.shift->classes}, {"keep_fraction", d.shift->keep_fraction}};
    j["shift_seed"] = d.shift_seed;
  }
  return j;
}

ExperimentConfig config_from_json(const Json& doc) {
  const std::string where = "config";
  require_object(doc, where,
                 {"method", "dataset", "networks", "schedule", "optimizer", "iterations",
                  "batch_size", "seeds", "log_interval", "reverse_inv_into_phi", "threads",
                  "output"});
  ExperimentConfig cfg;
  if (doc.contains("method")) {
    std::string m;
    read(doc, "method", m, where);
    cfg.method = parse_method(m);
  }
  if (doc.contains("dataset")) cfg.dataset = dataset_from_json(doc.at("dataset"));
  if (doc.contains("networks")) {
    const Json& n = doc.at("networks");
    require_object(n, "networks", {"phi", "classifier", "discriminator", "label_discriminator"});
    read_widths(n, "phi", cfg.networks.phi);
    read_widths(n, "classifier", cfg.networks.classifier);
    read_widths(n, "discriminator", cfg.networks.discriminator);
    read_widths(n, "label_discriminator", cfg.networks.label_discriminator);
  }
  if (doc.contains("schedule")) {
    const Json& s = doc.at("schedule");
    const std::string w = "schedule";
    require_object(s, w, {"lambda_gamma", "lambda_scale", "tau_max", "tau_min", "alpha", "lr0",
                          "lr_decay", "lr_power"});
    read(s, "lambda_gamma", cfg.schedule.lambda_gamma, w);
    read(s, "lambda_scale", cfg.schedule.lambda_scale, w);
    read(s, "tau_max", cfg.schedule.tau_max, w);
    read(s, "tau_min", cfg.schedule.tau_min, w);
    read(s, "alpha", cfg.schedule.alpha, w);
    read(s, "lr0", cfg.schedule.lr0, w);
    read(s, "lr_decay", cfg.schedule.lr_decay, w);
    read(s, "lr_power", cfg.schedule.lr_power, w);
  }
  if (doc.contains("optimizer")) {
    const Json& o = doc.at("optimizer");
    require_object(o, "optimizer", {"momentum", "weight_decay"});
    read(o, "momentum", cfg.optimizer.momentum, "optimizer");
    read(o, "weight_decay", cfg.optimizer.weight_decay, "optimizer");
  }
  long long iterations = static_cast<long long>(cfg.iterations), batch = cfg.batch_size;
  long long log_interval = static_cast<long long>(cfg.log_interval), threads = cfg.threads;
  read(doc, "iterations", iterations, where);
  read(doc, "batch_size", batch, where);
  read(doc, "seeds", cfg.seeds, where);
  read(doc, "log_interval", log_interval, where);
  read(doc, "reverse_inv_into_phi", cfg.reverse_inv_into_phi, where);
  read(doc, "threads", threads, where);
  read(doc, "output", cfg.output, where);
  if (iterations < 1 || batch < 1 || log_interval < 1 || threads < 1) {
    throw ContractError("iterations, batch_size, log_interval and threads must be >= 1");
  }
  cfg.iterations = static_cast<std::size_t>(iterations);
  cfg.batch_size = batch;
  cfg.log_interval = static_cast<std::size_t>(log_interval);
  cfg.threads = static_cast<unsigned>(threads);
  cfg.validate();
  return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
  const auto& s = cfg.schedule;
  return {{"method", method_name(cfg.method)},
          {"dataset", dataset_to_json(cfg.dataset)},
          {"networks",
           {{"phi", widths_json(cfg.networks.phi)},
            {"classifier", widths_json(cfg.networks.classifier)},
            {"discriminator", widths_json(cfg.networks.discriminator)},
            {"label_discriminator", widths_json(cfg.networks.label_discriminator)}}},
          {"schedule",
           {{"lambda_gamma", s.lambda_gamma},
            {"lambda_scale", s.lambda_scale},
            {"tau_max", s.tau_max},
            {"tau_min", s.tau_min},
            {"alpha", s.alpha},
            {"lr0", s.lr0},
            {"lr_decay", s.lr_decay},
            {"lr_power", s.lr_power}}},
          {"optimizer", {{"momentum", cfg.optimizer.momentum}, {"weight_decay", cfg.optimizer.weight_decay}}},
          {"iterations", cfg.iterations},
          {"batch_size", cfg.batch_size},
          {"seeds", cfg.seeds},
          {"log_interval", cfg.log_interval},
          {"reverse_inv_into_phi", cfg.reverse_inv_into_phi}};
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

std::pair<data::DomainDataset, data::DomainDataset> build_datasets(const DatasetConfig& cfg) {
  cfg.validate();
  std::pair<data::DomainDataset, data::DomainDataset> out;
  if (cfg.kind == "two_moons") {
    out = data::gen_two_moons(cfg.moons);
  } else {
    out.first = data::load_idx_dataset(cfg.source_images, cfg.source_labels, data::Domain::Source,
                                       cfg.classes, cfg.pool);
    out.second = data::load_idx_dataset(cfg.target_images, cfg.target_labels, data::Domain::Target,
                                        cfg.classes, cfg.pool);
  }
  if (cfg.shift) out.first = data::subsample_label_shift(out.first, *cfg.shift, cfg.shift_seed);
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(cfg).dump())));
  return buf;
}

}  // namespace ruda::train
