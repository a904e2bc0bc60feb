// Command-line front end over the sage C API.

#include "sage/capi.h"

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace {

struct ConfigDeleter {
  void operator()(sage_config* cfg) const { sage_config_destroy(cfg); }
};
using ConfigPtr = std::unique_ptr<sage_config, ConfigDeleter>;

int check(sage_status status) {
  if (status == SAGE_OK) return 0;
  std::fprintf(stderr, "error: %s\n", sage_last_error());
  return 1;
}

ConfigPtr make_config(const std::string& config_path,
                      const std::vector<std::pair<std::string, std::string>>& overrides,
                      int& rc) {
  sage_config* raw = nullptr;
  rc = check(sage_config_create(&raw));
  ConfigPtr cfg(raw);
  if (rc != 0) return cfg;
  if (!config_path.empty()) {
    rc = check(sage_config_load_file(cfg.get(), config_path.c_str()));
    if (rc != 0) return cfg;
  }
  for (const auto& [key, value] : overrides) {
    rc = check(sage_config_set(cfg.get(), key.c_str(), value.c_str()));
    if (rc != 0) return cfg;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAGE SLAM toolkit: synthetic sequences, factor-graph SLAM runs, evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seed;
  app.add_option("--config", config_path, "configuration file (key = value lines)");
  app.add_option("--seed", seed, "override the configured seed");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic sequence");
  std::string sim_out;
  simulate->add_option("--out", sim_out, "output sequence directory")->required();

  // run
  auto* run = app.add_subcommand("run", "run the SLAM pipeline on a sequence");
  std::string run_seq, run_out;
  bool deterministic = false;
  bool disable_loop_closure = false, disable_local_loop = false;
  bool disable_rp = false, disable_fm = false;
  run->add_option("--seq", run_seq, "sequence directory")->required();
  run->add_option("--out", run_out, "output directory")->required();
  run->add_flag("--deterministic", deterministic, "single-threaded deterministic mode (default)");
  run->add_flag("--disable-loop-closure", disable_loop_closure, "disable global loop closure");
  run->add_flag("--disable-local-loop", disable_local_loop, "disable local loop detection");
  run->add_flag("--disable-rp", disable_rp, "disable the reprojection factor in tracking");
  run->add_flag("--disable-fm", disable_fm, "disable the feature-metric factor");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a run against ground truth");
  std::string eval_est, eval_seq, eval_out;
  eval->add_option("--est", eval_est, "run output directory (trajectory + depths)")->required();
  eval->add_option("--seq", eval_seq, "sequence directory with ground truth")->required();
  eval->add_option("--out", eval_out, "report file path");

  CLI11_PARSE(app, argc, argv);

  std::vector<std::pair<std::string, std::string>> overrides;
  if (!seed.empty()) overrides.emplace_back("seed", seed);
  if (run->parsed()) {
    if (deterministic) overrides.emplace_back("deterministic", "1");
    if (disable_loop_closure) overrides.emplace_back("global_loop_enabled", "0");
    if (disable_local_loop) overrides.emplace_back("local_loop_enabled", "0");
    if (disable_rp) overrides.emplace_back("rp_enabled", "0");
    if (disable_fm) overrides.emplace_back("fm_enabled", "0");
  }

  int rc = 0;
  ConfigPtr cfg = make_config(config_path, overrides, rc);
  if (rc != 0) return rc;

  if (simulate->parsed()) {
    return check(sage_simulate(cfg.get(), sim_out.c_str()));
  }
  if (run->parsed()) {
    return check(sage_run(cfg.get(), run_seq.c_str(), run_out.c_str()));
  }
  if (eval->parsed()) {
    std::vector<char> report(16384);
    const int status = check(sage_evaluate(cfg.get(), eval_est.c_str(), eval_seq.c_str(),
                                           eval_out.empty() ? nullptr : eval_out.c_str(),
                                           report.data(), report.size()));
    if (status == 0) std::fputs(report.data(), stdout);
    return status;
  }
  return 1;
}
