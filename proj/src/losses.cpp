#include "ruda/losses.hpp"

#include <algorithm>
#include <cmath>

namespace ruda::losses {

Vector weights_from_discriminator(const Vector& logits, double tau) {
  if (!(tau >= 1.0)) throw ContractError("weights_from_discriminator: tau must be >= 1");
  // exp(-l/tau) is the closed form of (1 - sigma)/sigma; the exponent is capped
  // so that a saturated discriminator still yields a finite weight.
  return logits.unaryExpr([tau](double l) { return std::exp(std::clamp(-l / tau, -700.0, 700.0)); });
}

Vector renormalize_weights(const Vector& weights) {
  const double total = weights.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DegenerateDataError("renormalize_weights: weights must have a positive finite sum");
  }
  return weights * (static_cast<double>(weights.size()) / total);
}

Vector batch_weights(const WeightingMode& mode, const Vector& logits) {
  Vector w;
  switch (mode.kind) {
    case WeightKind::Uniform: return Vector::Ones(logits.size());
    case WeightKind::Discriminator: w = weights_from_discriminator(logits, 1.0); break;
    case WeightKind::Relaxed: w = weights_from_discriminator(logits, mode.tau); break;
  }
  return mode.renormalize ? renormalize_weights(w) : w;
}

namespace {

ad::Var clamp_prob(ad::Var p) { return ad::clamp(p, kProbEps, 1.0 - kProbEps); }

ad::Var constant(ad::Tape& tape, Matrix m) { return tape.leaf(std::move(m)); }

Matrix as_column(const Vector& w) { return Matrix(w); }

void require_rows(const Vector& w, Eigen::Index rows, const char* what) {
  if (w.size() != rows) {
    throw DimensionError(std::string(what) + ": " + std::to_string(w.size()) + " weights for " +
                         std::to_string(rows) + " rows");
  }
}

}  // namespace

ad::Var loss_inv_weighted(ad::Var d_source, ad::Var d_target, const Vector& source_weights) {
  if (d_source.cols() != 1 || d_target.cols() != 1) {
    throw DimensionError("loss_inv: discriminator outputs must be [n x 1]");
  }
  require_rows(source_weights, d_source.rows(), "loss_inv");
  ad::Tape& tape = d_source.tape();
  const ad::Var w = constant(tape, as_column(source_weights));
  const ad::Var src = ad::mean(w * ad::log(clamp_prob(d_source)));
  const ad::Var tgt = ad::mean(ad::log(1.0 - clamp_prob(d_target)));
  return -(src + tgt);
}

ad::Var loss_inv(ad::Var d_source, ad::Var d_target) {
  return loss_inv_weighted(d_source, d_target, Vector::Ones(d_source.rows()));
}

ad::Var loss_tsf(ad::Var dd_source, ad::Var dd_target, const Matrix& g_source,
                 const Matrix& g_target, const Vector& source_weights) {
  if (dd_source.rows() != g_source.rows() || dd_source.cols() != g_source.cols() ||
      dd_target.rows() != g_target.rows() || dd_target.cols() != g_target.cols() ||
      dd_source.cols() != dd_target.cols()) {
    throw DimensionError("loss_tsf: discriminator and classifier shapes differ");
  }
  require_rows(source_weights, dd_source.rows(), "loss_tsf");
  ad::Tape& tape = dd_source.tape();
  const auto n_s = static_cast<double>(dd_source.rows());
  const auto n_t = static_cast<double>(dd_target.rows());
  const Matrix src_coef = source_weights.asDiagonal() * g_source;
  const ad::Var src = ad::sum(constant(tape, src_coef) * ad::log(clamp_prob(dd_source)));
  const ad::Var tgt =
      ad::sum(constant(tape, g_target) * ad::log(1.0 - clamp_prob(dd_target)));
  return -(src * (1.0 / n_s) + tgt * (1.0 / n_t));
}

ad::Var loss_cls(ad::Var g_out, const Matrix& labels, const Vector& weights) {
  if (g_out.rows() != labels.rows() || g_out.cols() != labels.cols()) {
    throw DimensionError("loss_cls: predictions and labels differ in shape");
  }
  require_rows(weights, g_out.rows(), "loss_cls");
  ad::Tape& tape = g_out.tape();
  const Matrix coef = weights.asDiagonal() * labels;
  return -(ad::sum(constant(tape, coef) * ad::log(clamp_prob(g_out))) *
           (1.0 / static_cast<double>(g_out.rows())));
}

ad::Var entropy_regularizer(ad::Var g_out) {
  // Only the lower end is clamped: 0 * log(eps) = 0 and 1 * log(1) = 0 exactly.
  return -(ad::sum(g_out * ad::log(ad::clamp(g_out, kProbEps, 1.0))) *
           (1.0 / static_cast<double>(g_out.rows())));
}

ad::Var cdan_feature(ad::Var g_out, ad::Var z) { return ad::row_outer(g_out, z); }

bool BatchLosses::finite() const {
  return std::isfinite(classification) && std::isfinite(invariance) &&
         std::isfinite(transferability) && std::isfinite(weight_mean) &&
         std::isfinite(weight_min) && std::isfinite(weight_max);
}

}  // namespace ruda::losses
