#pragma once

// JSON front end of the discrete oracle.
//
// Instance documents hold the joint tables as nested arrays (one row per
// class) plus whatever the requested check needs:
//   p_source, p_target   C x m joint tables (required)
//   critics              {"b_scalar", "b_vec"}; defaults to B_vec = 1, B_scalar = C
//   g                    C x m prediction table
//   w                    length-m weights (defaults to all ones)
//   beta, alpha          scalars for bound4 / minent
//   partition            length-m cell index per atom
//   yhat                 length-m predicted class per atom (dann-cdan)
//   g_source, g_target   C x m per-domain prediction tables (dann-cdan)

#include "ruda/oracle.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace ruda::oracle {

using Json = nlohmann::json;

DiscreteInstance<double> instance_from_json(const Json& doc);
Json instance_to_json(const DiscreteInstance<double>& inst);

CriticFamily<double> critics_from_json(const Json& doc, Eigen::Index classes);

/// Checks accepted by run_check.
const std::vector<std::string>& check_names();

enum class CheckStatus { Holds, Fails, PreconditionUnmet };

struct CheckOutcome {
  Json report;  // {check, inputs_hash, values, holds}
  CheckStatus status = CheckStatus::Fails;
};

/// Runs a named check on an instance document. Throws ContractError for an
/// unknown check or missing fields.
CheckOutcome run_check(const std::string& check, const Json& doc);

/// Hex FNV-1a of the document's canonical serialisation.
std::string inputs_hash(const Json& doc);

}  // namespace ruda::oracle
