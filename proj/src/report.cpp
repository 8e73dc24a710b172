#include "ruda/report.hpp"

#include "ruda/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ruda::train {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_records_csv(std::ostream& out, const RunReport& report) {
  out << kCsvHeader << '\n';
  for (const auto& run : report.runs) {
    for (const auto& r : run.records) {
      out << r.iteration << ',' << fmt(r.lambda) << ',' << fmt(r.tau) << ',' << fmt(r.loss_c) << ','
          << fmt(r.loss_inv) << ',' << fmt(r.loss_tsf) << ',' << fmt(r.w_mean) << ','
          << fmt(r.w_min) << ',' << fmt(r.w_max) << ',' << fmt(r.acc_src) << ',' << fmt(r.acc_tgt)
          << '\n';
    }
  }
}

std::vector<StepRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("records CSV: unexpected header");
  std::vector<StepRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("records CSV: bad field '" + cell + "'");
      }
    }
    if (v.size() != 11) throw FormatError("records CSV: expected 11 fields, got " + std::to_string(v.size()));
    out.push_back({static_cast<std::size_t>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8],
                   v[9], v[10]});
  }
  return out;
}

nlohmann::json summary_json(const RunReport& report) {
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& run : report.runs) {
    per_seed.push_back({{"seed", run.seed},
                        {"final_acc_tgt", run.final_acc_tgt},
                        {"final_acc_src", run.final_acc_src}});
  }
  return {{"config_hash", report.config_hash},
          {"method", report.method},
          {"per_seed", per_seed},
          {"mean", report.mean_acc_tgt},
          {"sd", report.sd_acc_tgt}};
}

ReportPaths emit_report(const RunReport& report, const std::string& prefix) {
  ReportPaths paths{prefix + ".csv", prefix + ".json"};
  {
    std::ofstream out(paths.csv);
    if (!out) throw Error("cannot write report '" + paths.csv + "'");
    write_records_csv(out, report);
    if (!out) throw Error("failed writing report '" + paths.csv + "'");
  }
  {
    std::ofstream out(paths.json);
    if (!out) throw Error("cannot write report '" + paths.json + "'");
    out << summary_json(report).dump(2) << '\n';
    if (!out) throw Error("failed writing report '" + paths.json + "'");
  }
  return paths;
}

}  // namespace ruda::train
