#pragma once

// Training losses of the weighted invariant-representation procedure.
//
// Importance weights and pseudo-label predictions enter the losses as plain
// matrices, not tape nodes: no gradient ever flows through them.

#include "ruda/autodiff.hpp"
#include "ruda/tensor.hpp"

namespace ruda::losses {

/// Probabilities are clamped into [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-7;

enum class WeightKind { Uniform, Discriminator, Relaxed };

struct WeightingMode {
  WeightKind kind = WeightKind::Uniform;
  double tau = 1.0;  // used when kind == Relaxed
  bool renormalize = true;
};

/// w_i = (1 - sigma(l_i / tau)) / sigma(l_i / tau) = exp(-l_i / tau), from the
/// domain discriminator's pre-sigmoid outputs. Throws ContractError if tau < 1.
Vector weights_from_discriminator(const Vector& logits, double tau = 1.0);

/// Rescales to unit mean. Throws DegenerateDataError unless the sum is positive.
Vector renormalize_weights(const Vector& weights);

/// Weights for a batch under `mode`; all ones for Uniform.
Vector batch_weights(const WeightingMode& mode, const Vector& logits);

/// Domain discrimination loss, d trained to output 1 on source, 0 on target:
///   mean_i -log d(z_S,i) + mean_j -log(1 - d(z_T,j)).
/// Inputs are sigmoid outputs of shape [n x 1].
ad::Var loss_inv(ad::Var d_source, ad::Var d_target);

/// Source term optionally weighted: mean_i -w_i log d(z_S,i) + mean_j -log(1 - d(z_T,j)).
ad::Var loss_inv_weighted(ad::Var d_source, ad::Var d_target, const Vector& source_weights);

/// Label-domain discrimination loss with per-class sigmoid outputs [n x C]:
///   mean_i -w_i g_S,i . log dd_S,i + mean_j -g_T,j . log(1 - dd_T,j)
/// where g are the classifier's probability rows (treated as constants).
ad::Var loss_tsf(ad::Var dd_source, ad::Var dd_target, const Matrix& g_source,
                 const Matrix& g_target, const Vector& source_weights);

/// Weighted cross-entropy: mean_i -w_i y_i . log g_i.
ad::Var loss_cls(ad::Var g_out, const Matrix& labels, const Vector& weights);

/// Mean prediction entropy: mean_i -sum_c g_ic log g_ic.
ad::Var entropy_regularizer(ad::Var g_out);

/// Multilinear conditioning map: row i is the flattened g_i (x) z_i.
ad::Var cdan_feature(ad::Var g_out, ad::Var z);

struct BatchLosses {
  double classification = 0.0;
  double invariance = 0.0;
  double transferability = 0.0;
  double weight_mean = 1.0;
  double weight_min = 1.0;
  double weight_max = 1.0;

  bool finite() const;
};

}  // namespace ruda::losses
