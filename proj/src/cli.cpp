#include "ruda/cli.hpp"

#include "ruda/config.hpp"
#include "ruda/errors.hpp"
#include "ruda/grad_check.hpp"
#include "ruda/oracle_io.hpp"
#include "ruda/report.hpp"
#include "ruda/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace ruda::cli {

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractError("'" + path + "' is not valid JSON: " + e.what());
  }
}

int cmd_train(const std::string& config_path, const std::string& output, int threads,
              std::ostream& out, std::ostream& err) {
  auto cfg = train::load_config(config_path);
  if (!output.empty()) cfg.output = output;
  if (threads > 0) cfg.threads = static_cast<unsigned>(threads);
  train::RunReport report;
  try {
    report = train::run_experiment(cfg);
  } catch (const NumericalFailure& e) {
    err << "training aborted: " << e.what() << '\n';
    return kCheckFailed;
  }
  if (!cfg.output.empty()) {
    const auto paths = train::emit_report(report, cfg.output);
    err << "wrote " << paths.csv << " and " << paths.json << '\n';
  }
  out << train::summary_json(report).dump(2) << '\n';
  return kOk;
}

int cmd_oracle(const std::string& check, const std::string& instance_path, std::ostream& out,
               std::ostream& err) {
  const auto& names = oracle::check_names();
  if (std::find(names.begin(), names.end(), check) == names.end()) {
    err << "unknown check '" << check << "'; available:";
    for (const auto& n : names) err << ' ' << n;
    err << '\n';
    return kUsage;
  }
  const auto outcome = oracle::run_check(check, read_json(instance_path));
  out << outcome.report.dump(2) << '\n';
  switch (outcome.status) {
    case oracle::CheckStatus::Holds: return kOk;
    case oracle::CheckStatus::Fails: return kCheckFailed;
    case oracle::CheckStatus::PreconditionUnmet:
      err << "precondition of '" << check << "' not met on this instance\n";
      return kUsage;
  }
  return kUsage;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path, std::ostream& err) {
  const auto spec = train::dataset_from_json(read_json(spec_path));
  const auto [source, target] = train::build_datasets(spec);
  for (const auto* ds : {&source, &target}) {
    for (const auto& w : ds->warnings) err << "warning: " << w << '\n';
  }
  std::ofstream file(out_path);
  if (!file) throw Error("cannot write '" + out_path + "'");
  data::write_csv(file, {&source, &target});
  if (!file) throw Error("failed writing '" + out_path + "'");
  return kOk;
}

int cmd_grad_check(std::uint64_t seed, int graphs, std::ostream& out) {
  const auto report = gradcheck::run({seed, graphs, 1e-5});
  char buf[160];
  for (const auto& g : report.graphs) {
    std::snprintf(buf, sizeof buf, "graph %2d  %-13s params %4zu  max rel error %.3e\n", g.index,
                  g.kind.c_str(), g.parameters, g.max_rel_error);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "max relative error: %.6e\n", report.max_rel_error);
  out << buf;
  return report.passed() ? kOk : kCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain adaptation lab: training, exact discrete oracle, data generation"};
  app.name("ruda");
  app.require_subcommand(1);

  std::string config_path, output;
  int threads = 0;
  auto* train_cmd = app.add_subcommand("train", "Run an experiment config and report accuracies");
  train_cmd->add_option("config", config_path, "Experiment config (JSON)")->required();
  train_cmd->add_option("--output", output, "Report path prefix; overrides the config");
  train_cmd->add_option("--threads", threads, "Seeds trained in parallel");

  std::string check, instance_path;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Run an exact check on a discrete instance");
  oracle_cmd->add_option("check", check, "Check name")->required();
  oracle_cmd->add_option("instance", instance_path, "Instance (JSON)")->required();

  std::string spec_path, out_path;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a dataset spec's domains as CSV");
  gen_cmd->add_option("spec", spec_path, "Dataset spec (JSON)")->required();
  gen_cmd->add_option("out", out_path, "Output CSV")->required();

  std::uint64_t seed = 0;
  int graphs = 20;
  auto* grad_cmd = app.add_subcommand("grad-check", "Compare tape gradients with finite differences");
  grad_cmd->add_option("--seed", seed, "Seed of the random graphs");
  grad_cmd->add_option("--graphs", graphs, "Number of graphs")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, output, threads, out, err);
    if (*oracle_cmd) return cmd_oracle(check, instance_path, out, err);
    if (*gen_cmd) return cmd_gen_data(spec_path, out_path, err);
    if (*grad_cmd) return cmd_grad_check(seed, graphs, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  err << app.help();
  return kUsage;
}

}  // namespace ruda::cli
