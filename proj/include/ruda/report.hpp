#pragma once

#include "ruda/trainer.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace ruda::train {

/// Column order of the per-step CSV.
inline constexpr const char* kCsvHeader =
    "iteration,lambda,tau,loss_c,loss_inv,loss_tsf,w_mean,w_min,w_max,acc_src,acc_tgt";

/// Records of every seed, in seed order, under a single header.
void write_records_csv(std::ostream& out, const RunReport& report);
/// Parses a CSV written by write_records_csv. Throws FormatError on a header
/// or field mismatch.
std::vector<StepRecord> read_records_csv(std::istream& in);

/// {config_hash, method, per_seed: [{seed, final_acc_tgt, final_acc_src}], mean, sd}
nlohmann::json summary_json(const RunReport& report);

struct ReportPaths {
  std::string csv;
  std::string json;
};

/// Writes <prefix>.csv and <prefix>.json. Throws Error naming the path on I/O failure.
ReportPaths emit_report(const RunReport& report, const std::string& prefix);

}  // namespace ruda::train
