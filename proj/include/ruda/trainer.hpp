#pragma once

// Bi-level adversarial training: per iteration the domain discriminator d,
// then the label-domain discriminator (or the conditional discriminator of
// CDAN), then the representation phi, then the classifier g.

#include "ruda/config.hpp"
#include "ruda/datasets.hpp"
#include "ruda/nn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ruda::train {

struct StepRecord {
  std::size_t iteration = 0;  // 1-based count of completed iterations
  double lambda = 0.0;
  double tau = 0.0;
  double loss_c = 0.0;
  double loss_inv = 0.0;
  double loss_tsf = 0.0;  // conditional discriminator loss for CDAN methods
  double w_mean = 1.0;
  double w_min = 1.0;
  double w_max = 1.0;
  double acc_src = 0.0;
  double acc_tgt = 0.0;
};

/// The predictive part of a trained model, g o phi.
struct Model {
  nn::MlpSpec phi_spec, cls_spec;
  nn::MlpParams phi, cls;

  Matrix predict_proba(const Matrix& x) const;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<StepRecord> records;
  double final_acc_src = 0.0;
  double final_acc_tgt = 0.0;
  Model model;
};

struct RunReport {
  std::string method;
  std::string config_hash;
  std::vector<SeedRun> runs;
  double mean_acc_tgt = 0.0;
  double sd_acc_tgt = 0.0;  // sample standard deviation, 0 for a single seed
};

/// Fraction of rows whose predicted argmax (ties to the lowest index) equals
/// the label's hot index.
double evaluate(const Model& model, const data::DomainDataset& ds);

/// Index of the largest entry of each row, lowest index on ties.
std::vector<int> argmax_rows(const Matrix& m);

/// One training run. Throws NumericalFailure, naming the iteration and the
/// offending quantity, as soon as a loss or an update turns non-finite.
SeedRun run_seed(const ExperimentConfig& cfg, const data::DomainDataset& source,
                 const data::DomainDataset& target, std::uint64_t seed);

/// All seeds of a config, optionally in parallel; results are ordered as the
/// config lists the seeds and do not depend on the thread count.
RunReport run_experiment(const ExperimentConfig& cfg);

}  // namespace ruda::train
