// cissbench: config-driven experiments for class-incremental semantic
// segmentation on the synthetic desk-scale benchmark.
//
// Subcommands: generate | train | diagnose | report | matrix
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciss/error.hpp"
#include "ciss/experiment.hpp"
#include "ciss/parallel.hpp"

namespace {

using ciss::ExperimentConfig;
using nlohmann::json;

struct CommonArgs {
  std::string config_path;
  std::string preset = "voc15-5-mini";
  std::vector<std::string> overrides;
  int64_t seed = -1;
  bool force = false;
  bool paper_protocol = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config JSON file");
  cmd->add_option("--preset", args.preset, "named preset when no --config is given")
      ->capture_default_str();
  cmd->add_option("--set", args.overrides, "override config values, e.g. --set train.epochs=5");
  cmd->add_option("--seed", args.seed, "override the experiment seed");
  cmd->add_flag("--force", args.force, "recompute even if the artifact already exists");
  cmd->add_flag("--paper-protocol", args.paper_protocol,
                "use the reference protocol (100 epochs, batch 16)");
  cmd->add_option("--threads", args.threads, "worker threads for batch-level parallelism")
      ->capture_default_str();
}

ExperimentConfig resolve_config(const CommonArgs& args) {
  json j;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in.good())
      ciss::raise(ciss::ErrorKind::config, "cannot read config file " + args.config_path);
    j = json::parse(in);
  } else {
    j = ExperimentConfig::preset(args.preset).to_json();
  }
  for (const std::string& assignment : args.overrides)
    ExperimentConfig::apply_override(j, assignment);
  if (args.seed >= 0) j["seed"] = args.seed;
  if (args.paper_protocol) {
    j["train"]["epochs"] = 100;
    j["train"]["batch_size"] = 16;
  }
  ciss::set_num_threads(args.threads);
  return ExperimentConfig::from_json(j);
}

int fail(const ciss::Error& e) {
  const bool config_error = e.kind() == ciss::ErrorKind::config;
  json out{{"error", e.what()}, {"kind", config_error ? "config" : "runtime"}};
  std::cout << out.dump() << "\n";
  std::cerr << "error: " << e.what() << "\n";
  return config_error ? 2 : 3;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-incremental segmentation benchmark"};
  app.require_subcommand(1);

  CommonArgs args;
  std::vector<std::string> probes;
  std::vector<std::string> run_dirs;
  std::string report_dir = "report";
  std::vector<std::string> methods{"finetune", "ewc", "mas", "lwf", "replay"};
  std::vector<std::string> regimes{"overlapped", "disjoint", "full_disjoint"};
  std::vector<std::string> losses{"ce"};

  CLI::App* c_generate = app.add_subcommand("generate", "create the synthetic dataset");
  add_common(c_generate, args);
  CLI::App* c_train = app.add_subcommand("train", "train a continual sequence (or offline)");
  add_common(c_train, args);
  CLI::App* c_diagnose = app.add_subcommand("diagnose", "run forgetting probes on a run dir");
  add_common(c_diagnose, args);
  c_diagnose->add_option("run_dir", run_dirs, "run directory")->required();
  c_diagnose->add_option("--probes", probes,
                         "probe subset: confusion,stitch,cka,bias,retrain,predictions");
  CLI::App* c_report = app.add_subcommand("report", "render plots and a summary table");
  add_common(c_report, args);
  c_report->add_option("run_dirs", run_dirs, "run directories")->required();
  c_report->add_option("--out", report_dir, "report output directory")->capture_default_str();
  CLI::App* c_matrix = app.add_subcommand("matrix", "methods x regimes x losses grid");
  add_common(c_matrix, args);
  c_matrix->add_option("--methods", methods, "methods (finetune,ewc,mas,lwf,replay,offline)")
      ->delimiter(',')
      ->capture_default_str();
  c_matrix->add_option("--regimes", regimes, "regimes (overlapped,disjoint,full_disjoint)")
      ->delimiter(',')
      ->capture_default_str();
  c_matrix->add_option("--losses", losses, "losses (ce,unce,unce+wn)")
      ->delimiter(',')
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_generate->parsed()) {
      std::cout << ciss::cmd_generate(resolve_config(args), args.force).string() << "\n";
    } else if (c_train->parsed()) {
      std::cout << ciss::cmd_train(resolve_config(args), args.force).string() << "\n";
    } else if (c_diagnose->parsed()) {
      ciss::set_num_threads(args.threads);
      ciss::cmd_diagnose(run_dirs.at(0), probes, args.force);
      std::cout << run_dirs.at(0) << "\n";
    } else if (c_report->parsed()) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      std::cout << ciss::cmd_report(dirs, report_dir).string() << "\n";
    } else if (c_matrix->parsed()) {
      std::cout
          << ciss::cmd_matrix(resolve_config(args), methods, regimes, losses, args.force)
                 .string()
          << "\n";
    }
  } catch (const ciss::Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    json out{{"error", e.what()}, {"kind", "runtime"}};
    std::cout << out.dump() << "\n";
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
