#include "ruda/oracle_io.hpp"

#include "ruda/rng.hpp"

#include <cstdio>

namespace ruda::oracle {

namespace {

Matrix matrix_field(const Json& doc, const char* key) {
  if (!doc.contains(key)) throw ContractError(std::string("instance is missing '") + key + "'");
  const Json& rows = doc.at(key);
  if (!rows.is_array() || rows.empty() || !rows[0].is_array()) {
    throw ContractError(std::string("'") + key + "' must be a nested array");
  }
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows[0].size());
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
      throw DimensionError(std::string("'") + key + "' is not rectangular");
    }
    for (Eigen::Index j = 0; j < c; ++j) {
      const Json& v = row[static_cast<std::size_t>(j)];
      if (!v.is_number()) throw ContractError(std::string("'") + key + "' entries must be numbers");
      m(i, j) = v.get<double>();
    }
  }
  return m;
}

Vector vector_field(const Json& doc, const char* key) {
  const Json& arr = doc.at(key);
  if (!arr.is_array()) throw ContractError(std::string("'") + key + "' must be an array");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  return v;
}

std::vector<int> int_field(const Json& doc, const char* key) {
  if (!doc.contains(key)) throw ContractError(std::string("instance is missing '") + key + "'");
  return doc.at(key).get<std::vector<int>>();
}

double scalar_field(const Json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_number()) {
    throw ContractError(std::string("instance needs numeric '") + key + "'");
  }
  return doc.at(key).get<double>();
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

WeightTable<double> weights(const DiscreteInstance<double>& inst, const Json& doc) {
  WeightTable<double> w = doc.contains("w") ? WeightTable<double>{vector_field(doc, "w")}
                                            : WeightTable<double>::ones(inst.atoms());
  w.validate(inst);
  return w;
}

Matrix predictions(const DiscreteInstance<double>& inst, const Json& doc, const char* key = "g") {
  Matrix g = matrix_field(doc, key);
  if (g.rows() != inst.classes() || g.cols() != inst.atoms()) {
    throw DimensionError(std::string("'") + key + "' must be C x m");
  }
  if ((g.array() < 0.0).any() ||
      ((g.colwise().sum().array() - 1.0).abs() > kExactTol).any()) {
    throw ContractError(std::string("'") + key + "' columns must be probability vectors");
  }
  return g;
}

Json bound_values(const BoundReport<double>& r) {
  return {{"lhs", r.lhs},
          {"rhs", r.rhs},
          {"source_risk", r.source_risk},
          {"inv", r.invariance},
          {"tsf", r.transferability},
          {"target_noise", r.target_noise}};
}

CheckStatus status_of(bool holds) { return holds ? CheckStatus::Holds : CheckStatus::Fails; }

}  // namespace

DiscreteInstance<double> instance_from_json(const Json& doc) {
  if (!doc.is_object()) throw ContractError("instance document must be a JSON object");
  DiscreteInstance<double> inst{matrix_field(doc, "p_source"), matrix_field(doc, "p_target")};
  inst.validate();
  return inst;
}

Json instance_to_json(const DiscreteInstance<double>& inst) {
  return {{"p_source", to_json(inst.p_source)}, {"p_target", to_json(inst.p_target)}};
}

CriticFamily<double> critics_from_json(const Json& doc, Eigen::Index classes) {
  auto fam = CriticFamily<double>::for_classes(classes);
  if (doc.contains("critics")) {
    const Json& c = doc.at("critics");
    if (c.contains("b_vec")) {
      fam = CriticFamily<double>::for_classes(classes, c.at("b_vec").get<double>());
    }
    if (c.contains("b_scalar")) fam.b_scalar = c.at("b_scalar").get<double>();
  }
  fam.validate();
  return fam;
}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{
      "terms", "tightness", "tightness-weighted", "inductive-weights", "bound2",
      "bound3", "bound4", "minent", "dann-cdan"};
  return names;
}

std::string inputs_hash(const Json& doc) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return buf;
}

CheckOutcome run_check(const std::string& check, const Json& doc) {
  const auto inst = instance_from_json(doc);
  const auto fam = critics_from_json(doc, inst.classes());
  Json values;
  CheckStatus status = CheckStatus::Holds;

  if (check == "terms") {
    const auto w = weights(inst, doc);
    values = {{"inv", inv_exact(inst, fam)},
              {"tsf", tsf_exact(inst, fam)},
              {"inv_weighted", inv_weighted_exact(inst, w, fam)},
              {"tsf_weighted", tsf_weighted_exact(inst, w, fam)},
              {"d_fc", d_fc_exact(inst, fam)}};
    if (doc.contains("g")) values["tsf_hat"] = tsf_hat_exact(inst, w, predictions(inst, doc), fam);
  } else if (check == "tightness") {
    const auto r = check_tightness(inst, fam);
    values = {{"inv", r.inv},
              {"tsf", r.tsf},
              {"max_joint_deviation", r.max_joint_deviation},
              {"joints_equal", r.joints_equal},
              {"terms_zero", r.terms_zero}};
    status = status_of(r.consistent);
  } else if (check == "tightness-weighted") {
    const auto r = check_tightness_weighted(inst, fam);
    values = {{"w_star", to_json(r.w_star.w)},
              {"inv", r.inv},
              {"tsf", r.tsf},
              {"conditional_gap", r.conditional_gap},
              {"conditionals_equal", r.conditionals_equal},
              {"terms_zero", r.terms_zero}};
    status = status_of(r.consistent);
  } else if (check == "inductive-weights") {
    const auto r = check_inductive_weights(inst, int_field(doc, "partition"), fam);
    values = {{"cell_weights", to_json(r.cell_weights)},
              {"inv", r.inv},
              {"tsf", r.tsf},
              {"min_inv_cell_constant", r.min_inv_cell_constant},
              {"within_cell_equal", r.within_cell_equal},
              {"labels_equal_fine", r.labels_equal_fine},
              {"labels_equal_coarse", r.labels_equal_coarse},
              {"terms_zero", r.terms_zero}};
    status = status_of(r.consistent);
  } else if (check == "bound2") {
    const auto r = verify_bound2(inst, predictions(inst, doc), fam);
    values = bound_values(r);
    status = status_of(r.holds);
  } else if (check == "bound3") {
    const auto r = verify_bound3(inst, weights(inst, doc), predictions(inst, doc), fam);
    values = bound_values(r);
    status = status_of(r.holds);
  } else if (check == "bound4") {
    const auto r = verify_bound4(inst, weights(inst, doc), predictions(inst, doc),
                                 scalar_field(doc, "beta"), fam);
    values = {{"precondition_met", r.precondition_met},
              {"beta", r.beta},
              {"rho", r.rho},
              {"lhs", r.lhs},
              {"rhs", r.rhs},
              {"reference_risk", r.reference_risk},
              {"source_risk", r.source_risk},
              {"inv", r.invariance},
              {"tsf_hat", r.transferability_hat},
              {"target_noise", r.target_noise}};
    status = r.precondition_met ? status_of(r.holds) : CheckStatus::PreconditionUnmet;
  } else if (check == "minent") {
    const auto r = check_minent_bound(inst, weights(inst, doc), predictions(inst, doc),
                                      scalar_field(doc, "alpha"), fam);
    values = {{"precondition_met", r.precondition_met},
              {"alpha", r.alpha},
              {"eta", r.eta},
              {"lhs", r.lhs},
              {"rhs", r.rhs},
              {"target_entropy", r.target_entropy},
              {"source_cross_entropy", r.source_cross_entropy}};
    status = r.precondition_met ? status_of(r.holds) : CheckStatus::PreconditionUnmet;
  } else if (check == "dann-cdan") {
    const auto r = doc.contains("yhat")
                       ? check_dann_cdan_equality(inst, int_field(doc, "yhat"))
                       : check_dann_cdan_equality(inst, predictions(inst, doc, "g_source"),
                                                  predictions(inst, doc, "g_target"));
    values = {{"dann", r.dann}, {"cdan", r.cdan}, {"difference", r.difference}, {"equal", r.equal}};
    status = status_of(r.equal);
  } else {
    throw ContractError("unknown check '" + check + "'");
  }

  CheckOutcome out;
  out.status = status;
  out.report = {{"check", check},
                {"inputs_hash", inputs_hash(doc)},
                {"values", values},
                {"holds", status == CheckStatus::Holds}};
  return out;
}

}  // namespace ruda::oracle
