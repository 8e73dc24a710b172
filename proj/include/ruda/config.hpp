#pragma once

// Experiment configuration, read from JSON. Every object rejects keys it does
// not know; omitted keys take the defaults below.

#include "ruda/datasets.hpp"
#include "ruda/schedules.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ruda::train {

using Json = nlohmann::json;

enum class MethodKind { SourceOnly, DANN, CDAN, CDAN_W, RUDA, RUDA_W };

MethodKind parse_method(const std::string& name);
std::string method_name(MethodKind m);
bool is_weighted(MethodKind m);
bool is_adversarial(MethodKind m);
/// Whether the domain discriminator d on z is trained.
bool uses_domain_discriminator(MethodKind m);

struct DatasetConfig {
  std::string kind = "two_moons";  // two_moons | idx

  // two_moons
  data::TwoMoonsSpec moons;

  // idx
  std::string source_images, source_labels, target_images, target_labels;
  Eigen::Index classes = 10;
  Eigen::Index pool = 1;

  // label shift applied to the source domain
  std::optional<data::ShiftSpec> shift;
  std::uint64_t shift_seed = 0;

  void validate() const;
};

/// Hidden widths of each network; input and output widths follow from the
/// data. The last entry of `phi` is the representation width.
struct NetworkConfig {
  std::vector<Eigen::Index> phi{32, 16};
  std::vector<Eigen::Index> classifier{};
  std::vector<Eigen::Index> discriminator{32};
  std::vector<Eigen::Index> label_discriminator{32};
};

struct OptimizerConfig {
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct ExperimentConfig {
  MethodKind method = MethodKind::RUDA_W;
  DatasetConfig dataset;
  NetworkConfig networks;
  nn::ScheduleSet schedule;
  OptimizerConfig optimizer;
  std::size_t iterations = 2000;
  Eigen::Index batch_size = 64;
  std::vector<std::uint64_t> seeds{0};
  std::size_t log_interval = 50;
  bool reverse_inv_into_phi = false;
  unsigned threads = 1;
  std::string output;  // path prefix for <output>.csv / <output>.json

  void validate() const;
};

/// Throws ContractError on unknown keys, wrong types or violated invariants.
ExperimentConfig config_from_json(const Json& doc);
/// Canonical form with every field present; the config hash is taken over it.
Json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

DatasetConfig dataset_from_json(const Json& doc);
Json dataset_to_json(const DatasetConfig& cfg);

/// Source and target datasets described by a dataset config.
std::pair<data::DomainDataset, data::DomainDataset> build_datasets(const DatasetConfig& cfg);

/// Hex FNV-1a of the canonical config serialisation.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace ruda::train
