#pragma once

// Exact evaluation of the invariance / transferability quantities on a finite
// representation space.
//
// A DiscreteInstance stores the joint tables p_S(y, z) and p_T(y, z) as C x m
// matrices (rows = classes, columns = representation atoms). Critics are any
// functions on the m atoms bounded by B_scalar (scalar family F) or by B_vec
// per coordinate (vector family F_C), so every supremum below has a closed
// form: B times the L1 norm of a signed measure.

#include "ruda/errors.hpp"
#include "ruda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace ruda::oracle {

enum class Side { Source, Target };

/// Exactness tolerance for table sums and vanishing terms.
inline constexpr double kExactTol = 1e-12;

template <typename Scalar = double>
struct DiscreteInstance {
  MatrixX<Scalar> p_source;  // C x m joint table
  MatrixX<Scalar> p_target;  // C x m joint table

  Eigen::Index classes() const { return p_source.rows(); }
  Eigen::Index atoms() const { return p_source.cols(); }

  const MatrixX<Scalar>& joint(Side s) const { return s == Side::Source ? p_source : p_target; }

  /// p_D(z) as a length-m vector.
  VectorX<Scalar> marginal(Side s) const { return joint(s).colwise().sum().transpose(); }

  /// Throws ContractError unless both tables share a shape, are nonnegative
  /// and sum to one within kExactTol.
  void validate() const {
    if (p_source.rows() < 1 || p_source.cols() < 1) throw ContractError("instance tables are empty");
    if (p_source.rows() != p_target.rows() || p_source.cols() != p_target.cols()) {
      throw DimensionError("source and target tables differ in shape");
    }
    for (const auto* t : {&p_source, &p_target}) {
      if (!t->allFinite() || (t->array() < Scalar(0)).any()) {
        throw ContractError("joint tables must be finite and nonnegative");
      }
      if (std::abs(static_cast<double>(t->sum()) - 1.0) > kExactTol) {
        throw ContractError("joint tables must sum to 1");
      }
    }
  }
};

template <typename Scalar = double>
struct CriticFamily {
  Scalar b_scalar = Scalar(1);  // F: Z -> [-b_scalar, b_scalar]
  Scalar b_vec = Scalar(1);     // F_C: Z -> [-b_vec, b_vec]^C

  /// B_vec = 1 and B_scalar = C B_vec^2, so products of vector critics stay in F.
  static CriticFamily for_classes(Eigen::Index classes, Scalar b_vec = Scalar(1)) {
    return {Scalar(classes) * b_vec * b_vec, b_vec};
  }

  void validate() const {
    if (!(b_scalar > Scalar(0)) || !(b_vec > Scalar(0))) {
      throw ContractError("critic bounds must be positive");
    }
  }
};

/// Importance weights over the atoms; valid when nonnegative with E_S[w] = 1.
template <typename Scalar = double>
struct WeightTable {
  VectorX<Scalar> w;

  static WeightTable ones(Eigen::Index atoms) { return {VectorX<Scalar>::Ones(atoms)}; }

  Scalar source_expectation(const DiscreteInstance<Scalar>& inst) const {
    return inst.marginal(Side::Source).dot(w);
  }

  void validate(const DiscreteInstance<Scalar>& inst) const {
    if (w.size() != inst.atoms()) throw DimensionError("weight table length differs from atom count");
    if (!w.allFinite() || (w.array() < Scalar(0)).any()) {
      throw ContractError("weights must be finite and nonnegative");
    }
    if (std::abs(static_cast<double>(source_expectation(inst)) - 1.0) > kExactTol) {
      throw ContractError("weights must satisfy E_S[w] = 1");
    }
  }
};

/// Rescales arbitrary nonnegative weights so that E_S[w] = 1.
template <typename Scalar>
WeightTable<Scalar> normalized_weights(const DiscreteInstance<Scalar>& inst, VectorX<Scalar> w) {
  const Scalar mass = inst.marginal(Side::Source).dot(w);
  if (!(mass > Scalar(0))) throw DegenerateDataError("weights have zero source expectation");
  return {w / mass};
}

/// Conditional class probabilities f_D(., z) = p_D(., z) / p_D(z). Columns with
/// zero mass are set to the uniform vector and flagged.
template <typename Scalar = double>
struct LabellingFunction {
  MatrixX<Scalar> table;          // C x m, columns sum to 1
  std::vector<bool> zero_mass;    // per atom
};

template <typename Derived>
LabellingFunction<typename Derived::Scalar> conditional_columns(const Eigen::MatrixBase<Derived>& joint) {
  using Scalar = typename Derived::Scalar;
  LabellingFunction<Scalar> f;
  f.table.resize(joint.rows(), joint.cols());
  f.zero_mass.assign(static_cast<std::size_t>(joint.cols()), false);
  for (Eigen::Index z = 0; z < joint.cols(); ++z) {
    const Scalar mass = joint.col(z).sum();
    if (mass > Scalar(0)) {
      f.table.col(z) = joint.col(z) / mass;
    } else {
      f.table.col(z).setConstant(Scalar(1) / Scalar(joint.rows()));
      f.zero_mass[static_cast<std::size_t>(z)] = true;
    }
  }
  return f;
}

template <typename Scalar>
LabellingFunction<Scalar> labelling_function(const DiscreteInstance<Scalar>& inst, Side side) {
  return conditional_columns(inst.joint(side));
}

/// Weighted source joint w(z) p_S(y, z).
template <typename Scalar>
MatrixX<Scalar> weighted_source_joint(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w) {
  return inst.p_source * w.w.asDiagonal();
}

// ---------------------------------------------------------------------------
// Integral probability metrics

/// sup_f E_T f - E_S f = B_scalar sum_z |p_T(z) - p_S(z)|.
template <typename Scalar>
Scalar inv_exact(const DiscreteInstance<Scalar>& inst, const CriticFamily<Scalar>& fam) {
  return fam.b_scalar * (inst.marginal(Side::Target) - inst.marginal(Side::Source)).cwiseAbs().sum();
}

/// sup_f E_T[Y.f] - E_S[Y.f] = B_vec sum_{c,z} |p_T(c,z) - p_S(c,z)|.
template <typename Scalar>
Scalar tsf_exact(const DiscreteInstance<Scalar>& inst, const CriticFamily<Scalar>& fam) {
  return fam.b_vec * (inst.p_target - inst.p_source).cwiseAbs().sum();
}

template <typename Scalar>
Scalar inv_weighted_exact(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w,
                          const CriticFamily<Scalar>& fam) {
  const VectorX<Scalar> weighted = inst.marginal(Side::Source).cwiseProduct(w.w);
  return fam.b_scalar * (inst.marginal(Side::Target) - weighted).cwiseAbs().sum();
}

template <typename Scalar>
Scalar tsf_weighted_exact(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w,
                          const CriticFamily<Scalar>& fam) {
  return fam.b_vec * (inst.p_target - weighted_source_joint(inst, w)).cwiseAbs().sum();
}

/// Transferability with target labels replaced by predictions g (C x m):
/// B_vec sum_{c,z} |p_T(z) g_c(z) - w(z) p_S(c,z)|.
template <typename Scalar, typename Derived>
Scalar tsf_hat_exact(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w,
                     const Eigen::MatrixBase<Derived>& g, const CriticFamily<Scalar>& fam) {
  if (g.rows() != inst.classes() || g.cols() != inst.atoms()) {
    throw DimensionError("prediction table shape differs from instance");
  }
  const MatrixX<Scalar> predicted_target = g * inst.marginal(Side::Target).asDiagonal();
  return fam.b_vec * (predicted_target - weighted_source_joint(inst, w)).cwiseAbs().sum();
}

/// sup_{f,f' in F_C} |E_S||f - f'||^2 - E_T||f - f'||^2|. The squared
/// disagreement ranges over [0, 4 C B_vec^2] independently per atom, so the
/// supremum is 4 C B_vec^2 times the larger one-sided mass difference.
template <typename Scalar>
Scalar d_fc_exact(const DiscreteInstance<Scalar>& inst, const CriticFamily<Scalar>& fam) {
  const VectorX<Scalar> diff = inst.marginal(Side::Source) - inst.marginal(Side::Target);
  const Scalar pos = diff.cwiseMax(Scalar(0)).sum();
  const Scalar neg = (-diff).cwiseMax(Scalar(0)).sum();
  return Scalar(4) * Scalar(inst.classes()) * fam.b_vec * fam.b_vec * std::max(pos, neg);
}

// ---------------------------------------------------------------------------
// Risks under the squared loss

/// sum_{c,z} joint(c,z) ||g(., z) - e_c||^2 for an arbitrary nonnegative joint.
template <typename DerivedJ, typename DerivedG>
typename DerivedJ::Scalar squared_risk(const Eigen::MatrixBase<DerivedJ>& joint,
                                       const Eigen::MatrixBase<DerivedG>& g) {
  using Scalar = typename DerivedJ::Scalar;
  if (g.rows() != joint.rows() || g.cols() != joint.cols()) {
    throw DimensionError("prediction table shape differs from instance");
  }
  Scalar total(0);
  for (Eigen::Index z = 0; z < joint.cols(); ++z) {
    const Scalar norm_g = g.col(z).squaredNorm();
    for (Eigen::Index c = 0; c < joint.rows(); ++c) {
      // ||g - e_c||^2 = ||g||^2 - 2 g_c + 1
      total += joint(c, z) * (norm_g - Scalar(2) * g(c, z) + Scalar(1));
    }
  }
  return total;
}

template <typename Scalar, typename Derived>
Scalar risk_exact(const DiscreteInstance<Scalar>& inst, Side side, const Eigen::MatrixBase<Derived>& g) {
  return squared_risk(inst.joint(side), g);
}

template <typename Scalar, typename Derived>
Scalar weighted_source_risk(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w,
                            const Eigen::MatrixBase<Derived>& g) {
  return squared_risk(weighted_source_joint(inst, w), g);
}

/// Bayes predictor of the weighted source, f_{w.S}.
template <typename Scalar>
MatrixX<Scalar> weighted_source_bayes(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w) {
  return conditional_columns(weighted_source_joint(inst, w)).table;
}

/// H_T(g) = E_{z~p_T}[-g(z) . log g(z)], with 0 log 0 = 0.
template <typename Scalar, typename Derived>
Scalar target_entropy(const DiscreteInstance<Scalar>& inst, const Eigen::MatrixBase<Derived>& g) {
  const VectorX<Scalar> pt = inst.marginal(Side::Target);
  Scalar h(0);
  for (Eigen::Index z = 0; z < g.cols(); ++z) {
    for (Eigen::Index c = 0; c < g.rows(); ++c) {
      const Scalar v = g(c, z);
      if (v > Scalar(0)) h -= pt(z) * v * std::log(v);
    }
  }
  return h;
}

/// CE_{w.S}(Y, g) = sum_{c,z} w(z) p_S(c,z) (-log g_c(z)).
template <typename Scalar, typename Derived>
Scalar weighted_source_cross_entropy(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w,
                                     const Eigen::MatrixBase<Derived>& g) {
  const MatrixX<Scalar> joint = weighted_source_joint(inst, w);
  Scalar ce(0);
  for (Eigen::Index z = 0; z < joint.cols(); ++z) {
    for (Eigen::Index c = 0; c < joint.rows(); ++c) {
      if (joint(c, z) > Scalar(0)) ce -= joint(c, z) * std::log(g(c, z));
    }
  }
  return ce;
}

// ---------------------------------------------------------------------------
// Bounds

template <typename Scalar = double>
struct BoundReport {
  Scalar lhs{};
  Scalar rhs{};
  Scalar source_risk{};
  Scalar invariance{};
  Scalar transferability{};
  Scalar target_noise{};
  bool holds = false;
};

/// eps_T(g) <= eps_{w.S}(g) + 6 INV(w) + 2 TSF(w) + eps_T(f_T).
template <typename Scalar, typename Derived>
BoundReport<Scalar> verify_bound3(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w,
                                  const Eigen::MatrixBase<Derived>& g, const CriticFamily<Scalar>& fam) {
  BoundReport<Scalar> r;
  const auto f_t = labelling_function(inst, Side::Target).table;
  r.lhs = risk_exact(inst, Side::Target, g);
  r.source_risk = weighted_source_risk(inst, w, g);
  r.invariance = inv_weighted_exact(inst, w, fam);
  r.transferability = tsf_weighted_exact(inst, w, fam);
  r.target_noise = risk_exact(inst, Side::Target, f_t);
  r.rhs = r.source_risk + Scalar(6) * r.invariance + Scalar(2) * r.transferability + r.target_noise;
  r.holds = r.lhs <= r.rhs + Scalar(kExactTol);
  return r;
}

/// eps_T(g) <= eps_S(g) + 6 INV + 2 TSF + eps_T(f_T).
template <typename Scalar, typename Derived>
BoundReport<Scalar> verify_bound2(const DiscreteInstance<Scalar>& inst, const Eigen::MatrixBase<Derived>& g,
                                  const CriticFamily<Scalar>& fam) {
  BoundReport<Scalar> r;
  const auto f_t = labelling_function(inst, Side::Target).table;
  r.lhs = risk_exact(inst, Side::Target, g);
  r.source_risk = risk_exact(inst, Side::Source, g);
  r.invariance = inv_exact(inst, fam);
  r.transferability = tsf_exact(inst, fam);
  r.target_noise = risk_exact(inst, Side::Target, f_t);
  r.rhs = r.source_risk + Scalar(6) * r.invariance + Scalar(2) * r.transferability + r.target_noise;
  r.holds = r.lhs <= r.rhs + Scalar(kExactTol);
  return r;
}

template <typename Scalar = double>
struct InductiveBoundReport {
  bool precondition_met = false;
  Scalar beta{};
  Scalar rho{};
  Scalar lhs{};                 // eps_T(g~)
  Scalar reference_risk{};      // eps_T(g_{w.S})
  Scalar rhs{};
  Scalar source_risk{};         // eps_{w.S}(g_{w.S})
  Scalar invariance{};
  Scalar transferability_hat{};
  Scalar target_noise{};
  bool holds = false;
};

/// eps_T(g~) <= rho (eps_{w.S}(g_{w.S}) + 6 INV(w) + 2 TSF^(w, g~) + eps_T(f_T)),
/// rho = beta / (1 - beta), for g~ satisfying eps_T(g~) <= beta eps_T(g_{w.S}).
/// When that condition fails the report has precondition_met = false and the
/// inequality is not assessed.
template <typename Scalar, typename Derived>
InductiveBoundReport<Scalar> verify_bound4(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w,
                                           const Eigen::MatrixBase<Derived>& g_tilde, Scalar beta,
                                           const CriticFamily<Scalar>& fam) {
  if (!(beta > Scalar(0) && beta < Scalar(1))) throw ContractError("bound4: beta must lie in (0, 1)");
  InductiveBoundReport<Scalar> r;
  r.beta = beta;
  r.rho = beta / (Scalar(1) - beta);
  const MatrixX<Scalar> g_ws = weighted_source_bayes(inst, w);
  r.lhs = risk_exact(inst, Side::Target, g_tilde);
  r.reference_risk = risk_exact(inst, Side::Target, g_ws);
  r.precondition_met = r.lhs <= beta * r.reference_risk + Scalar(kExactTol);
  r.source_risk = weighted_source_risk(inst, w, g_ws);
  r.invariance = inv_weighted_exact(inst, w, fam);
  r.transferability_hat = tsf_hat_exact(inst, w, g_tilde, fam);
  r.target_noise = risk_exact(inst, Side::Target, labelling_function(inst, Side::Target).table);
  r.rhs = r.rho * (r.source_risk + Scalar(6) * r.invariance + Scalar(2) * r.transferability_hat +
                   r.target_noise);
  r.holds = r.precondition_met && r.lhs <= r.rhs + Scalar(kExactTol);
  return r;
}

// ---------------------------------------------------------------------------
// Tightness

template <typename Scalar = double>
struct TightnessReport {
  Scalar inv{};
  Scalar tsf{};
  Scalar max_joint_deviation{};
  bool joints_equal = false;
  bool terms_zero = false;
  bool consistent = false;  // terms_zero == joints_equal
};

/// Zero-term threshold for a family: the exactness tolerance scaled by the
/// largest critic bound and the number of cells summed.
template <typename Scalar>
Scalar zero_threshold(const DiscreteInstance<Scalar>& inst, const CriticFamily<Scalar>& fam) {
  return Scalar(kExactTol) * std::max(fam.b_scalar, fam.b_vec) * Scalar(inst.p_source.size());
}

/// INV = TSF = 0 exactly when the joints coincide.
template <typename Scalar>
TightnessReport<Scalar> check_tightness(const DiscreteInstance<Scalar>& inst, const CriticFamily<Scalar>& fam) {
  TightnessReport<Scalar> r;
  r.inv = inv_exact(inst, fam);
  r.tsf = tsf_exact(inst, fam);
  r.max_joint_deviation = (inst.p_source - inst.p_target).cwiseAbs().maxCoeff();
  r.joints_equal = r.max_joint_deviation < Scalar(kExactTol);
  const Scalar tol = zero_threshold(inst, fam);
  r.terms_zero = r.inv <= tol && r.tsf <= tol;
  r.consistent = r.terms_zero == r.joints_equal;
  return r;
}

/// w*(z) = p_T(z) / p_S(z) on the source support, 0 where both vanish. Throws
/// UnboundedWeightError where p_S(z) = 0 < p_T(z).
template <typename Scalar>
WeightTable<Scalar> optimal_weights(const DiscreteInstance<Scalar>& inst) {
  const VectorX<Scalar> ps = inst.marginal(Side::Source);
  const VectorX<Scalar> pt = inst.marginal(Side::Target);
  WeightTable<Scalar> w{VectorX<Scalar>::Zero(inst.atoms())};
  for (Eigen::Index z = 0; z < inst.atoms(); ++z) {
    if (ps(z) > Scalar(0)) {
      w.w(z) = pt(z) / ps(z);
    } else if (pt(z) > Scalar(0)) {
      throw UnboundedWeightError("atom " + std::to_string(z) +
                                 " has target mass but no source mass");
    }
  }
  return w;
}

/// Largest |f_S - f_T| entry over atoms carrying target mass.
template <typename Scalar>
Scalar conditional_gap(const DiscreteInstance<Scalar>& inst) {
  const auto fs = labelling_function(inst, Side::Source).table;
  const auto ft = labelling_function(inst, Side::Target).table;
  const VectorX<Scalar> pt = inst.marginal(Side::Target);
  Scalar gap(0);
  for (Eigen::Index z = 0; z < inst.atoms(); ++z) {
    if (pt(z) > Scalar(0)) gap = std::max(gap, (fs.col(z) - ft.col(z)).cwiseAbs().maxCoeff());
  }
  return gap;
}

template <typename Scalar = double>
struct WeightedTightnessReport {
  WeightTable<Scalar> w_star;
  Scalar inv{};
  Scalar tsf{};
  Scalar conditional_gap{};
  bool conditionals_equal = false;
  bool terms_zero = false;
  bool consistent = false;  // terms_zero == conditionals_equal
};

/// INV(w*) = TSF(w*) = 0 exactly when E_T[Y|Z] = E_S[Y|Z].
template <typename Scalar>
WeightedTightnessReport<Scalar> check_tightness_weighted(const DiscreteInstance<Scalar>& inst,
                                                         const CriticFamily<Scalar>& fam) {
  WeightedTightnessReport<Scalar> r;
  r.w_star = optimal_weights(inst);
  r.inv = inv_weighted_exact(inst, r.w_star, fam);
  r.tsf = tsf_weighted_exact(inst, r.w_star, fam);
  r.conditional_gap = conditional_gap(inst);
  r.conditionals_equal = r.conditional_gap < Scalar(kExactTol);
  const Scalar tol = zero_threshold(inst, fam);
  r.terms_zero = r.inv <= tol && r.tsf <= tol;
  r.consistent = r.terms_zero == r.conditionals_equal;
  return r;
}

// ---------------------------------------------------------------------------
// Inductive design of weights

template <typename Scalar = double>
struct InductiveWeightsReport {
  VectorX<Scalar> cell_weights;      // p_T(z') / p_S(z')
  WeightTable<Scalar> atom_weights;  // cell weights pulled back to atoms
  Scalar inv{};
  Scalar tsf{};
  Scalar min_inv_cell_constant{};    // min over all nonnegative cell-constant w
  Scalar within_cell_gap{};          // max |p_S(z|z') - p_T(z|z')|
  Scalar fine_label_gap{};           // max |f_S - f_T| at atom level
  Scalar coarse_label_gap{};         // max |f_S - f_T| at cell level
  bool within_cell_equal = false;
  bool labels_equal_fine = false;
  bool labels_equal_coarse = false;
  bool terms_zero = false;
  bool conditions_hold = false;
  bool consistent = false;           // terms_zero == conditions_hold
};

/// Collapses atoms into cells: joint'(c, k) = sum_{z: psi(z) = k} joint(c, z).
template <typename Derived>
MatrixX<typename Derived::Scalar> coarsen(const Eigen::MatrixBase<Derived>& joint,
                                          const std::vector<int>& partition, int cells) {
  MatrixX<typename Derived::Scalar> out = MatrixX<typename Derived::Scalar>::Zero(joint.rows(), cells);
  for (Eigen::Index z = 0; z < joint.cols(); ++z) out.col(partition[static_cast<std::size_t>(z)]) += joint.col(z);
  return out;
}

/// Number of cells of a partition map; throws ContractError unless it maps
/// every atom onto a cell and every cell is hit.
inline int partition_cells(const std::vector<int>& partition, Eigen::Index atoms) {
  if (static_cast<Eigen::Index>(partition.size()) != atoms) {
    throw DimensionError("partition length differs from atom count");
  }
  int cells = 0;
  for (int k : partition) {
    if (k < 0) throw ContractError("partition cells must be nonnegative");
    cells = std::max(cells, k + 1);
  }
  std::vector<bool> hit(static_cast<std::size_t>(cells), false);
  for (int k : partition) hit[static_cast<std::size_t>(k)] = true;
  if (std::find(hit.begin(), hit.end(), false) != hit.end()) {
    throw ContractError("partition is not surjective onto its cells");
  }
  return cells;
}

/// min_{v >= 0} sum_z |a_z - v b_z|: convex and piecewise linear in v, so the
/// minimum sits at a breakpoint a_z / b_z (or at 0).
template <typename Scalar>
Scalar min_scaled_l1(const std::vector<Scalar>& a, const std::vector<Scalar>& b) {
  std::vector<Scalar> candidates{Scalar(0)};
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] > Scalar(0)) candidates.push_back(a[i] / b[i]);
  }
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (Scalar v : candidates) {
    Scalar total(0);
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - v * b[i]);
    best = std::min(best, total);
  }
  return best;
}

/// Weights computed on cells z' = psi(z) instead of atoms. Both terms vanish
/// exactly when w(z') = p_T(z')/p_S(z'), p_S(z|z') = p_T(z|z') and the labelling
/// functions agree at both granularities.
template <typename Scalar>
InductiveWeightsReport<Scalar> check_inductive_weights(const DiscreteInstance<Scalar>& inst,
                                                       const std::vector<int>& partition,
                                                       const CriticFamily<Scalar>& fam) {
  const int cells = partition_cells(partition, inst.atoms());
  const VectorX<Scalar> ps = inst.marginal(Side::Source);
  const VectorX<Scalar> pt = inst.marginal(Side::Target);
  const VectorX<Scalar> ps_cell = coarsen(ps.transpose(), partition, cells).transpose();
  const VectorX<Scalar> pt_cell = coarsen(pt.transpose(), partition, cells).transpose();

  InductiveWeightsReport<Scalar> r;
  r.cell_weights = VectorX<Scalar>::Zero(cells);
  for (int k = 0; k < cells; ++k) {
    if (ps_cell(k) > Scalar(0)) {
      r.cell_weights(k) = pt_cell(k) / ps_cell(k);
    } else if (pt_cell(k) > Scalar(0)) {
      throw UnboundedWeightError("cell " + std::to_string(k) + " has target mass but no source mass");
    }
  }
  r.atom_weights.w.resize(inst.atoms());
  for (Eigen::Index z = 0; z < inst.atoms(); ++z) {
    r.atom_weights.w(z) = r.cell_weights(partition[static_cast<std::size_t>(z)]);
  }
  r.inv = inv_weighted_exact(inst, r.atom_weights, fam);
  r.tsf = tsf_weighted_exact(inst, r.atom_weights, fam);

  r.min_inv_cell_constant = Scalar(0);
  r.within_cell_gap = Scalar(0);
  for (int k = 0; k < cells; ++k) {
    std::vector<Scalar> a, b;
    for (Eigen::Index z = 0; z < inst.atoms(); ++z) {
      if (partition[static_cast<std::size_t>(z)] != k) continue;
      a.push_back(pt(z));
      b.push_back(ps(z));
      if (ps_cell(k) > Scalar(0) && pt_cell(k) > Scalar(0)) {
        r.within_cell_gap = std::max(r.within_cell_gap, std::abs(ps(z) / ps_cell(k) - pt(z) / pt_cell(k)));
      }
    }
    r.min_inv_cell_constant += fam.b_scalar * min_scaled_l1(a, b);
  }
  r.fine_label_gap = conditional_gap(inst);
  const DiscreteInstance<Scalar> coarse{coarsen(inst.p_source, partition, cells),
                                        coarsen(inst.p_target, partition, cells)};
  r.coarse_label_gap = conditional_gap(coarse);

  r.within_cell_equal = r.within_cell_gap < Scalar(kExactTol);
  r.labels_equal_fine = r.fine_label_gap < Scalar(kExactTol);
  r.labels_equal_coarse = r.coarse_label_gap < Scalar(kExactTol);
  const Scalar tol = zero_threshold(inst, fam);
  r.terms_zero = r.inv <= tol && r.tsf <= tol;
  r.conditions_hold = r.within_cell_equal && r.labels_equal_fine && r.labels_equal_coarse;
  r.consistent = r.terms_zero == r.conditions_hold;
  return r;
}

// ---------------------------------------------------------------------------
// Entropy minimisation as a lower bound of transferability

template <typename Scalar = double>
struct MinEntReport {
  bool precondition_met = false;
  Scalar alpha{};
  Scalar eta{};
  Scalar lhs{};  // TSF^(w, g)
  Scalar target_entropy{};
  Scalar source_cross_entropy{};
  Scalar rhs{};  // eta (H_T - CE_{w.S})
  bool holds = false;
};

/// eta = -1 / log(alpha / (C - 1)).
template <typename Scalar>
Scalar minent_eta(Scalar alpha, Eigen::Index classes) {
  return Scalar(-1) / std::log(alpha / Scalar(classes - 1));
}

/// TSF^(w, g) >= eta (H_T(g) - CE_{w.S}(Y, g)) for alpha-smooth g, i.e.
/// alpha/(C-1) <= g_c(z) <= 1 - alpha. Needs C >= 2 and B_vec >= 1.
template <typename Scalar, typename Derived>
MinEntReport<Scalar> check_minent_bound(const DiscreteInstance<Scalar>& inst, const WeightTable<Scalar>& w,
                                        const Eigen::MatrixBase<Derived>& g, Scalar alpha,
                                        const CriticFamily<Scalar>& fam) {
  const Eigen::Index c = inst.classes();
  if (c < 2) throw ContractError("minent: needs at least two classes");
  if (!(alpha > Scalar(0) && alpha <= Scalar(c - 1) / Scalar(c))) {
    throw ContractError("minent: alpha must lie in (0, (C-1)/C]");
  }
  if (!(fam.b_vec >= Scalar(1))) throw ContractError("minent: vector critic bound must be >= 1");
  MinEntReport<Scalar> r;
  r.alpha = alpha;
  r.eta = minent_eta(alpha, c);
  const Scalar lo = alpha / Scalar(c - 1) - Scalar(kExactTol);
  const Scalar hi = Scalar(1) - alpha + Scalar(kExactTol);
  r.precondition_met = (g.array() >= lo).all() && (g.array() <= hi).all();
  r.lhs = tsf_hat_exact(inst, w, g, fam);
  r.target_entropy = target_entropy(inst, g);
  r.source_cross_entropy = weighted_source_cross_entropy(inst, w, g);
  r.rhs = r.eta * (r.target_entropy - r.source_cross_entropy);
  r.holds = r.precondition_met && r.lhs >= r.rhs - Scalar(kExactTol);
  return r;
}

// ---------------------------------------------------------------------------
// Optimal-discriminator adversarial objectives

/// min_d E_p[-log d] + E_q[-log(1 - d)] over atoms with masses (p_i, q_i); the
/// optimum is d* = p / (p + q).
template <typename Scalar>
Scalar optimal_discriminator_loss(const std::vector<Scalar>& p, const std::vector<Scalar>& q) {
  Scalar loss(0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Scalar total = p[i] + q[i];
    if (p[i] > Scalar(0)) loss -= p[i] * std::log(p[i] / total);
    if (q[i] > Scalar(0)) loss -= q[i] * std::log(q[i] / total);
  }
  return loss;
}

template <typename Scalar = double>
struct DannCdanReport {
  Scalar dann{};
  Scalar cdan{};
  Scalar difference{};
  bool equal = false;
};

inline constexpr double kDannCdanTol = 1e-9;

/// DANN objective over z versus CDAN objective over the feature g_D(z) (x) e_z,
/// both at their optimal discriminators. g_source / g_target are the C x m
/// prediction tables used in each domain.
template <typename Scalar, typename DerivedS, typename DerivedT>
DannCdanReport<Scalar> check_dann_cdan_equality(const DiscreteInstance<Scalar>& inst,
                                                const Eigen::MatrixBase<DerivedS>& g_source,
                                                const Eigen::MatrixBase<DerivedT>& g_target) {
  const Eigen::Index c = inst.classes(), m = inst.atoms();
  if (g_source.rows() != c || g_source.cols() != m || g_target.rows() != c || g_target.cols() != m) {
    throw DimensionError("prediction tables differ in shape from instance");
  }
  const VectorX<Scalar> ps = inst.marginal(Side::Source);
  const VectorX<Scalar> pt = inst.marginal(Side::Target);

  DannCdanReport<Scalar> r;
  r.dann = optimal_discriminator_loss(std::vector<Scalar>(ps.data(), ps.data() + m),
                                      std::vector<Scalar>(pt.data(), pt.data() + m));

  // Group the joint feature vectors of both domains by exact equality.
  std::map<std::vector<Scalar>, std::pair<Scalar, Scalar>> atoms;
  auto feature = [&](const auto& g, Eigen::Index z) {
    std::vector<Scalar> f(static_cast<std::size_t>(c * m), Scalar(0));
    for (Eigen::Index k = 0; k < c; ++k) f[static_cast<std::size_t>(k * m + z)] = g(k, z);
    return f;
  };
  for (Eigen::Index z = 0; z < m; ++z) {
    if (ps(z) > Scalar(0)) atoms[feature(g_source, z)].first += ps(z);
    if (pt(z) > Scalar(0)) atoms[feature(g_target, z)].second += pt(z);
  }
  std::vector<Scalar> p, q;
  for (const auto& [key, mass] : atoms) {
    p.push_back(mass.first);
    q.push_back(mass.second);
  }
  r.cdan = optimal_discriminator_loss(p, q);
  r.difference = std::abs(r.dann - r.cdan);
  r.equal = r.difference < Scalar(kDannCdanTol);
  return r;
}

/// Deterministic predictions shared by both domains: yhat[z] is the class of z.
template <typename Scalar>
DannCdanReport<Scalar> check_dann_cdan_equality(const DiscreteInstance<Scalar>& inst,
                                                const std::vector<int>& yhat) {
  if (static_cast<Eigen::Index>(yhat.size()) != inst.atoms()) {
    throw DimensionError("prediction map length differs from atom count");
  }
  MatrixX<Scalar> g = MatrixX<Scalar>::Zero(inst.classes(), inst.atoms());
  for (std::size_t z = 0; z < yhat.size(); ++z) {
    if (yhat[z] < 0 || yhat[z] >= inst.classes()) throw ContractError("predicted class out of range");
    g(yhat[z], static_cast<Eigen::Index>(z)) = Scalar(1);
  }
  return check_dann_cdan_equality(inst, g, g);
}

}  // namespace ruda::oracle
